//! Distillation losses between projected latents `zp` and teacher features `f`.
//!
//! Every loss returns its value together with the gradient with respect to
//! `zp`. Masked frames contribute to neither sums nor denominators.

mod batch;

pub use batch::{FeatureBatch, Margins};

use ndarray::{Array2, Array3, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const COS_EPS: f64 = 1e-8;
pub const DEFAULT_MAX_PAIRS_FRAMES: usize = 4096;
const SUBSAMPLE_SEED: u64 = 0x6d64_7373;

/// Loss value and `∂loss/∂zp`.
#[derive(Debug, Clone)]
pub struct LossValue {
    pub value: f64,
    pub grad: Array3<f64>,
    /// Set when the value was estimated on a frame subsample.
    pub approximate: bool,
}

pub fn cosine(u: &[f64], v: &[f64], eps: f64) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "cosine of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    Ok(cos_parts(u.iter().copied(), v.iter().copied(), eps).0)
}

/// Returns `(clamped cosine, dot, |u|, |v|, clamped?)` over paired iterators.
fn cos_parts(
    u: impl Iterator<Item = f64>,
    v: impl Iterator<Item = f64>,
    eps: f64,
) -> (f64, f64, f64, f64, bool) {
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    let (nu, nv) = (uu.sqrt(), vv.sqrt());
    let raw = dot / (nu.max(eps) * nv.max(eps));
    let c = raw.clamp(-1.0, 1.0);
    (c, dot, nu, nv, c != raw)
}

/// Cosine of `u` against `v` and its gradient with respect to `u`, written into `grad_u`.
fn cos_grad(u: ArrayView1<f64>, v: ArrayView1<f64>, eps: f64, grad_u: &mut [f64]) -> f64 {
    let (c, _, nu, nv, clamped) = cos_parts(u.iter().copied(), v.iter().copied(), eps);
    let du = nu.max(eps);
    let dv = nv.max(eps);
    if clamped {
        grad_u.iter_mut().for_each(|g| *g = 0.0);
        return c;
    }
    let self_term = if nu > eps { c / (du * du) } else { 0.0 };
    for ((g, &a), &b) in grad_u.iter_mut().zip(u.iter()).zip(v.iter()) {
        *g = b / (du * dv) - self_term * a;
    }
    c
}

/// `-log σ(c)` and its derivative in `c`.
fn neg_log_sigmoid(c: f64) -> (f64, f64) {
    let value = (-c).exp().ln_1p();
    let deriv = -1.0 / (1.0 + c.exp());
    (value, deriv)
}

/// Frame-wise loss `mean_{valid (b,t)} φ(cos(zp_bt, f_bt))` for a scalar hinge/link `φ`.
fn framewise(zp: &FeatureBatch, f: &FeatureBatch, phi: impl Fn(f64) -> (f64, f64)) -> Result<LossValue> {
    zp.check_pair(f)?;
    let frames = zp.valid_frames();
    let n = frames.len() as f64;
    let (_, _, d) = zp.dim();
    let mut grad = Array3::zeros(zp.dim());
    let mut scratch = vec![0.0; d];
    let mut total = 0.0;
    for &(b, t) in &frames {
        let u = zp.values().slice(ndarray::s![b, t, ..]);
        let v = f.values().slice(ndarray::s![b, t, ..]);
        let c = cos_grad(u, v, COS_EPS, &mut scratch);
        let (val, dval) = phi(c);
        total += val;
        let scale = dval / n;
        for (g, s) in grad.slice_mut(ndarray::s![b, t, ..]).iter_mut().zip(&scratch) {
            *g = scale * s;
        }
    }
    Ok(LossValue {
        value: total / n,
        grad,
        approximate: false,
    })
}

/// Frame-wise (T-axis) loss: mean of `-log σ(cos)` over valid frames.
pub fn loss_t(zp: &FeatureBatch, f: &FeatureBatch) -> Result<LossValue> {
    framewise(zp, f, neg_log_sigmoid)
}

/// Dimension-wise (D-axis) loss: mean over `(b, d)` of `-log σ(cos)` between the
/// time series of dimension `d` in sample `b`, restricted to valid frames.
pub fn loss_d(zp: &FeatureBatch, f: &FeatureBatch) -> Result<LossValue> {
    zp.check_pair(f)?;
    let (nb, _, nd) = zp.dim();
    let mut grad = Array3::zeros(zp.dim());
    let mut total = 0.0;
    let denom = (nb * nd) as f64;
    for b in 0..nb {
        let valid: Vec<usize> = zp
            .mask()
            .row(b)
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(t, _)| t)
            .collect();
        if valid.is_empty() {
            return Err(Error::ShapeMismatch(format!("sample {b} has no valid frames")));
        }
        let mut scratch = vec![0.0; valid.len()];
        for d in 0..nd {
            let u: ndarray::Array1<f64> = valid.iter().map(|&t| zp.values()[[b, t, d]]).collect();
            let v: ndarray::Array1<f64> = valid.iter().map(|&t| f.values()[[b, t, d]]).collect();
            let c = cos_grad(u.view(), v.view(), COS_EPS, &mut scratch);
            let (val, dval) = neg_log_sigmoid(c);
            total += val;
            for (&t, s) in valid.iter().zip(&scratch) {
                grad[[b, t, d]] = dval / denom * s;
            }
        }
    }
    Ok(LossValue {
        value: total / denom,
        grad,
        approximate: false,
    })
}

/// Marginal cosine loss: mean of `ReLU(1 - m1 - cos)` over valid frames.
pub fn loss_mcos(zp: &FeatureBatch, f: &FeatureBatch, m1: f64) -> Result<LossValue> {
    check_margin("m1", m1)?;
    framewise(zp, f, |c| {
        let h = 1.0 - m1 - c;
        if h > 0.0 {
            (h, -1.0)
        } else {
            (0.0, 0.0)
        }
    })
}

fn check_margin(name: &str, m: f64) -> Result<()> {
    if !(0.0..=2.0).contains(&m) {
        return Err(Error::Config(format!("margin {name} = {m} outside [0, 2]")));
    }
    Ok(())
}

/// Unit-normalised rows (by `max(|row|, eps)`), the row norms, and the divisors used.
fn normalize_rows(rows: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
    let mut out = rows.clone();
    let mut norms = Vec::with_capacity(rows.nrows());
    for mut r in out.axis_iter_mut(Axis(0)) {
        let n = r.dot(&r).sqrt();
        norms.push(n);
        let d = n.max(COS_EPS);
        r.mapv_inplace(|x| x / d);
    }
    (out, norms)
}

/// Marginal distance-sequence similarity loss over all pairs of valid frames
/// pooled across the batch: `(1/N²) Σ_ij ReLU(|cos(zp_i, zp_j) - cos(f_i, f_j)| - m2)`.
///
/// When more than `max_pairs_frames` frames are valid, a fixed-seed subsample
/// of that many frames is used and the result is marked approximate.
pub fn loss_mdss(zp: &FeatureBatch, f: &FeatureBatch, m2: f64, max_pairs_frames: usize) -> Result<LossValue> {
    check_margin("m2", m2)?;
    zp.check_pair(f)?;
    if max_pairs_frames == 0 {
        return Err(Error::Config("max_pairs_frames must be positive".into()));
    }
    let mut frames = zp.valid_frames();
    let approximate = frames.len() > max_pairs_frames;
    if approximate {
        let mut rng = ChaCha8Rng::seed_from_u64(SUBSAMPLE_SEED);
        let mut picked = rand::seq::index::sample(&mut rng, frames.len(), max_pairs_frames).into_vec();
        picked.sort_unstable();
        frames = picked.into_iter().map(|i| frames[i]).collect();
    }
    let n = frames.len();
    let (_, _, d) = zp.dim();
    let gather = |src: &Array3<f64>| {
        let mut m = Array2::zeros((n, d));
        for (i, &(b, t)) in frames.iter().enumerate() {
            m.row_mut(i).assign(&src.slice(ndarray::s![b, t, ..]));
        }
        m
    };
    let (zn, z_norms) = normalize_rows(&gather(zp.values()));
    let (fn_, _) = normalize_rows(&gather(f.values()));
    let sz_raw = zn.dot(&zn.t());
    let sf = fn_.dot(&fn_.t()).mapv(|x| x.clamp(-1.0, 1.0));

    let inv_n2 = 1.0 / (n * n) as f64;
    let mut total = 0.0;
    // coefficient of ∂S_ij in the loss derivative, zero where S_ij was clamped
    let mut coef = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let raw = sz_raw[[i, j]];
            let s = raw.clamp(-1.0, 1.0);
            let delta = s - sf[[i, j]];
            let h = delta.abs() - m2;
            if h > 0.0 {
                total += h;
                if s == raw {
                    coef[[i, j]] = delta.signum() * inv_n2;
                }
            }
        }
    }

    let mut grad = Array3::zeros(zp.dim());
    // ∂S_ij/∂z_i = (û_j - [|z_i|>eps] S_ij û_i) / max(|z_i|, eps); S is symmetric so
    // each row i collects the coefficients of both (i, j) and (j, i).
    let sym = &coef + &coef.t();
    let sz = sz_raw.mapv(|x| x.clamp(-1.0, 1.0));
    let pulled = sym.dot(&zn);
    for (i, &(b, t)) in frames.iter().enumerate() {
        let di = z_norms[i].max(COS_EPS);
        let self_coef: f64 = if z_norms[i] > COS_EPS {
            sym.row(i).iter().zip(sz.row(i).iter()).map(|(c, s)| c * s).sum()
        } else {
            0.0
        };
        let mut g = grad.slice_mut(ndarray::s![b, t, ..]);
        for k in 0..d {
            g[k] = (pulled[[i, k]] - self_coef * zn[[i, k]]) / di;
        }
    }
    Ok(LossValue {
        value: total * inv_n2,
        grad,
        approximate,
    })
}

/// Margin-free evaluation distances `(mcos with m1 = 0, mdss with m2 = 0)` over all frames.
pub fn align_distances(zp: &FeatureBatch, f: &FeatureBatch) -> Result<(f64, f64)> {
    let mcos = loss_mcos(zp, f, 0.0)?.value;
    let mdss = loss_mdss(zp, f, 0.0, usize::MAX)?.value;
    Ok((mcos, mdss))
}
