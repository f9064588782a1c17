//! Gradient-norm ratio loss weighting and its per-step trace.
//!
//! The adaptive factor for a distillation term is
//! `‖∇L_rec‖ / max(‖∇L_distill‖, eps)`, clamped to `[eps, omega_cap]`. It is a
//! plain number: nothing differentiates through it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use ndarray::{s, Array3};

use crate::error::{Error, Result};
use crate::losses::{FeatureBatch, LossValue};
use crate::nn::Param;
use crate::vae::Projection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    #[default]
    Static,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightConfig {
    pub mode: WeightMode,
    pub omega_ssl: f64,
    pub eps: f64,
    pub omega_cap: f64,
    /// Measure `‖∇L_rec‖` on the encoder's latent head when it is identically
    /// zero on the projection parameters.
    pub rec_grad_fallback: bool,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            mode: WeightMode::Static,
            omega_ssl: 2.5,
            eps: 1e-12,
            omega_cap: 1e6,
            rec_grad_fallback: true,
        }
    }
}

impl WeightConfig {
    pub fn adaptive() -> Self {
        WeightConfig {
            mode: WeightMode::Adaptive,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        // zero is allowed: it disables alignment while keeping the graph identical
        if !(self.omega_ssl >= 0.0) || !self.omega_ssl.is_finite() {
            return Err(Error::Config(format!("omega_ssl {} must be finite and >= 0", self.omega_ssl)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        if !(self.omega_cap >= 1.0) {
            return Err(Error::Config(format!("omega_cap {} must be >= 1", self.omega_cap)));
        }
        Ok(())
    }
}

/// Euclidean norm of the concatenated gradients.
pub fn grad_norm(grads: &[&Param]) -> f64 {
    grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt()
}

/// A scalar loss of a parameter set with an analytic gradient.
pub trait ParamLoss {
    fn value(&self, params: &[Param]) -> f64;
    fn grad(&self, params: &[Param]) -> Vec<Param>;
}

/// `‖∂loss/∂params‖`.
pub fn loss_grad_norm(loss: &dyn ParamLoss, params: &[Param]) -> f64 {
    let g = loss.grad(params);
    grad_norm(&g.iter().collect::<Vec<_>>())
}

type AlignFn = dyn Fn(&FeatureBatch, &FeatureBatch) -> Result<LossValue>;

/// `scale · loss(projection(latent), target)` as a function of the projection parameters,
/// with the latent and target held fixed. Parameters are ordered as [`Projection::params`].
pub struct ProjectionLoss<'a> {
    pub template: &'a Projection,
    pub latent: &'a FeatureBatch,
    pub target: &'a FeatureBatch,
    pub loss: Box<AlignFn>,
    pub scale: f64,
}

impl ProjectionLoss<'_> {
    fn with_params(&self, params: &[Param]) -> Projection {
        let mut p = self.template.clone();
        for (l, pair) in p.layers.iter_mut().zip(params.chunks(2)) {
            l.weight = pair[0].clone();
            l.bias = pair[1].clone();
        }
        p
    }

    fn forward(&self, proj: &Projection) -> (FeatureBatch, crate::vae::ProjectionCache) {
        let (b, t, d) = self.latent.dim();
        let rows = self.latent.values().to_shape((b * t, d)).expect("contiguous").to_owned();
        let (y, cache) = proj.forward(&rows);
        let mut out: Array3<f64> = y.into_shape_with_order((b, t, proj.out_dim())).expect("shape");
        for ((bi, ti), &m) in self.latent.mask().indexed_iter() {
            if !m {
                out.slice_mut(s![bi, ti, ..]).fill(0.0);
            }
        }
        let zp = FeatureBatch::new(out, self.latent.mask().clone()).expect("mask shape unchanged");
        (zp, cache)
    }
}

impl ParamLoss for ProjectionLoss<'_> {
    fn value(&self, params: &[Param]) -> f64 {
        let (zp, _) = self.forward(&self.with_params(params));
        self.scale * (self.loss)(&zp, self.target).expect("shapes fixed at construction").value
    }

    fn grad(&self, params: &[Param]) -> Vec<Param> {
        let proj = self.with_params(params);
        let (zp, cache) = self.forward(&proj);
        let lv = (self.loss)(&zp, self.target).expect("shapes fixed at construction");
        let (b, t, _) = self.latent.dim();
        let dy = (lv.grad * self.scale)
            .into_shape_with_order((b * t, proj.out_dim()))
            .expect("grad shape");
        let mut g = proj.clone();
        for l in &mut g.layers {
            l.weight.fill(0.0);
            l.bias.fill(0.0);
        }
        proj.backward(&cache, &dy, &mut g);
        g.params().into_iter().cloned().collect()
    }
}

/// Adaptive factor from precomputed gradient norms.
pub fn weight_from_norms(rec_norm: f64, distill_norm: f64, cfg: &WeightConfig) -> f64 {
    if distill_norm <= cfg.eps {
        return cfg.omega_cap;
    }
    (rec_norm / distill_norm).clamp(cfg.eps, cfg.omega_cap)
}

pub fn adaptive_weight(rec: &dyn ParamLoss, distill: &dyn ParamLoss, params: &[Param], cfg: &WeightConfig) -> f64 {
    weight_from_norms(loss_grad_norm(rec, params), loss_grad_norm(distill, params), cfg)
}

/// Independent factors for the two joint-marginal terms.
pub fn joint_adaptive_weights(
    rec: &dyn ParamLoss,
    mcos: &dyn ParamLoss,
    mdss: &dyn ParamLoss,
    params: &[Param],
    cfg: &WeightConfig,
) -> (f64, f64) {
    let r = loss_grad_norm(rec, params);
    (
        weight_from_norms(r, loss_grad_norm(mcos, params), cfg),
        weight_from_norms(r, loss_grad_norm(mdss, params), cfg),
    )
}

/// `omega_ssl` in static mode, `omega_ssl · omega_adaptive` in adaptive mode.
pub fn effective_distill_weight(cfg: &WeightConfig, omega_adaptive: f64) -> f64 {
    match cfg.mode {
        WeightMode::Static => cfg.omega_ssl,
        WeightMode::Adaptive => cfg.omega_ssl * omega_adaptive,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub omegas: Vec<f64>,
    pub grad_norm_rec: f64,
    pub grad_norms: Vec<f64>,
}

/// Append-only per-step record of adaptive factors and gradient norms.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightTrace {
    pub components: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl WeightTrace {
    pub fn new(components: &[&str]) -> Self {
        WeightTrace {
            components: components.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: TraceRow) -> Result<()> {
        if let Some(last) = self.rows.last() {
            if row.step <= last.step {
                return Err(Error::Validation(format!("trace step {} after {}", row.step, last.step)));
            }
        }
        if row.omegas.len() != self.components.len() || row.grad_norms.len() != self.components.len() {
            return Err(Error::Validation("trace row does not match components".into()));
        }
        if row.grad_norm_rec < 0.0 || row.grad_norms.iter().any(|&g| g < 0.0) {
            return Err(Error::Validation("negative gradient norm".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Keeps rows with `step < step_limit`.
    pub fn truncate_before(&mut self, step_limit: usize) {
        self.rows.retain(|r| r.step < step_limit);
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["step".to_string()];
        if self.components.len() == 1 {
            h.push("omega_adaptive".into());
            h.push("grad_norm_rec".into());
            h.push("grad_norm_distill".into());
        } else {
            h.extend(self.components.iter().map(|c| format!("omega_{c}")));
            h.push("grad_norm_rec".into());
            h.extend(self.components.iter().map(|c| format!("grad_norm_{c}")));
        }
        h
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.header())?;
        for r in &self.rows {
            let mut rec = vec![r.step.to_string()];
            rec.extend(r.omegas.iter().map(|v| format!("{v:e}")));
            rec.push(format!("{:e}", r.grad_norm_rec));
            rec.extend(r.grad_norms.iter().map(|v| format!("{v:e}")));
            w.write_record(rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        scale: f64,
    }

    impl ParamLoss for Quadratic {
        fn value(&self, params: &[Param]) -> f64 {
            self.scale * params.iter().map(|p| p.sq_norm()).sum::<f64>()
        }
        fn grad(&self, params: &[Param]) -> Vec<Param> {
            params
                .iter()
                .map(|p| Param {
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|x| 2.0 * self.scale * x).collect(),
                })
                .collect()
        }
    }

    struct Sum;

    impl ParamLoss for Sum {
        fn value(&self, params: &[Param]) -> f64 {
            params.iter().flat_map(|p| p.data.iter()).sum()
        }
        fn grad(&self, params: &[Param]) -> Vec<Param> {
            params
                .iter()
                .map(|p| Param {
                    shape: p.shape.clone(),
                    data: vec![1.0; p.len()],
                })
                .collect()
        }
    }

    fn params() -> Vec<Param> {
        vec![
            Param { shape: vec![2], data: vec![0.5, -1.0] },
            Param { shape: vec![3], data: vec![2.0, 0.1, 0.3] },
        ]
    }

    #[test]
    fn unit_gradient_norm() {
        assert!((loss_grad_norm(&Sum, &params()) - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(loss_grad_norm(&Quadratic { scale: 0.0 }, &params()), 0.0);
    }

    #[test]
    fn identical_losses_give_unit_weight() {
        let cfg = WeightConfig::adaptive();
        let q = Quadratic { scale: 1.0 };
        assert_eq!(adaptive_weight(&q, &q, &params(), &cfg), 1.0);
        assert_eq!(joint_adaptive_weights(&q, &q, &q, &params(), &cfg), (1.0, 1.0));
    }

    #[test]
    fn scaling_distill_scales_weight_inversely() {
        let cfg = WeightConfig::adaptive();
        let rec = Quadratic { scale: 1.0 };
        let w1 = adaptive_weight(&rec, &Quadratic { scale: 0.3 }, &params(), &cfg);
        let w10 = adaptive_weight(&rec, &Quadratic { scale: 3.0 }, &params(), &cfg);
        assert!((w10 - w1 / 10.0).abs() <= 1e-10 * w1);
        let (a, b) = joint_adaptive_weights(&rec, &Quadratic { scale: 0.3 }, &Quadratic { scale: 30.0 }, &params(), &cfg);
        assert!((a - w1).abs() < 1e-12);
        assert!((b - w1 / 100.0).abs() <= 1e-10 * w1);
    }

    #[test]
    fn degenerate_denominator_hits_cap() {
        let cfg = WeightConfig::adaptive();
        let w = adaptive_weight(&Sum, &Quadratic { scale: 0.0 }, &params(), &cfg);
        assert_eq!(w, cfg.omega_cap);
        assert_eq!(weight_from_norms(1e9, 1e-3, &cfg), cfg.omega_cap);
        assert_eq!(weight_from_norms(0.0, 1.0, &cfg), cfg.eps);
    }

    #[test]
    fn effective_weight_modes() {
        let s = WeightConfig::default();
        assert_eq!(effective_distill_weight(&s, 40.0), 2.5);
        let a = WeightConfig::adaptive();
        assert_eq!(effective_distill_weight(&a, 1.0), 2.5);
        assert_eq!(effective_distill_weight(&a, 40.0), 100.0);
    }

    #[test]
    fn config_validation() {
        assert!(WeightConfig { omega_ssl: -1.0, ..Default::default() }.validate().is_err());
        assert!(WeightConfig { omega_cap: 0.5, ..Default::default() }.validate().is_err());
        assert!(WeightConfig { omega_ssl: 0.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn trace_rejects_non_increasing_steps() {
        let mut t = WeightTrace::new(&["mcos", "mdss"]);
        let row = |step| TraceRow { step, omegas: vec![1.0, 2.0], grad_norm_rec: 1.0, grad_norms: vec![1.0, 0.5] };
        t.push(row(0)).unwrap();
        t.push(row(3)).unwrap();
        assert!(t.push(row(3)).is_err());
        assert_eq!(
            t.header(),
            vec!["step", "omega_mcos", "omega_mdss", "grad_norm_rec", "grad_norm_mcos", "grad_norm_mdss"]
        );
        assert_eq!(WeightTrace::new(&["t"]).header()[1], "omega_adaptive");
    }
}
