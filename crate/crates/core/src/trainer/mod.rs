//! Deterministic composite-objective training loop.
//!
//! Every step is single-threaded and seeded from `(seed, step)`, so a run resumed
//! from a checkpoint replays the same batches and noise as an uninterrupted one.

mod checkpoint;
mod config;
mod data;
mod log;

use std::path::Path;
use std::sync::Arc;

use ndarray::{s, Array2, Array3, Axis, Zip};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{AlignTarget, TrainConfig};
pub(crate) use config::derive_seed;
pub use data::{Clip, Corpus, TrainBatch};
pub use log::{Divergence, LogRow, TrainLog};

use crate::error::{Error, Result};
use crate::featureio::DatasetManifest;
use crate::losses::FeatureBatch;
use crate::nn::{Conv1d, Param};
use crate::scheme::{DistillScheme, SchemeContext, SchemeRegistry};
use crate::vae::{
    kl_loss, reparameterize_with, standard_normal, LatentPosterior, Projection, ReconLoss, VaeModel,
};
use crate::weighting::{effective_distill_weight, grad_norm, weight_from_norms, TraceRow, WeightMode, WeightTrace};
use config::SEED_NOISE;

/// Loss values and weights of one step plus the parameter gradient of the total.
#[derive(Debug, Clone)]
pub struct StepEval {
    pub row: LogRow,
    /// Present in adaptive mode.
    pub trace: Option<TraceRow>,
    pub grads: VaeModel,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
    pub trace: WeightTrace,
}

impl TrainOutcome {
    pub fn diverged(&self) -> Option<&Divergence> {
        self.log.diverged.as_ref()
    }
}

pub struct Trainer {
    config: TrainConfig,
    scheme: Arc<dyn DistillScheme>,
    corpus: Corpus,
    recon: ReconLoss,
}

fn scale(p: &mut Param, c: f64) {
    p.data.iter_mut().for_each(|x| *x *= c);
}

impl Trainer {
    pub fn new(config: TrainConfig, manifest: &DatasetManifest) -> Result<Self> {
        Self::with_registry(config, manifest, &SchemeRegistry::builtin())
    }

    /// Validates the config and loads the corpus; any data or teacher mismatch fails here.
    pub fn with_registry(config: TrainConfig, manifest: &DatasetManifest, registry: &SchemeRegistry) -> Result<Self> {
        config.validate(registry)?;
        let scheme = registry.get(&config.scheme)?;
        let corpus = Corpus::load(manifest, &config, !scheme.components().is_empty())?;
        Ok(Self::from_corpus(config, scheme, corpus))
    }

    pub fn from_corpus(config: TrainConfig, scheme: Arc<dyn DistillScheme>, corpus: Corpus) -> Self {
        let recon = ReconLoss::new(config.use_stft);
        Trainer {
            config,
            scheme,
            corpus,
            recon,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn components(&self) -> &'static [&'static str] {
        self.scheme.components()
    }

    pub fn batch(&self, step: usize) -> TrainBatch {
        self.corpus.batch(&self.config, step)
    }

    /// Forward and backward pass of the composite objective at `step` (which fixes the
    /// reparameterization noise and the learning rate reported in the row).
    pub fn evaluate(&self, model: &VaeModel, batch: &TrainBatch, step: usize) -> Result<StepEval> {
        let cfg = &self.config;
        let wcfg = cfg.weighting();
        let (nb, _) = batch.waves.dim();
        let t = batch.frame_mask.ncols();
        let d = model.encoder.latent_dim;
        let mut grads = model.zeros_like();

        let mut mu = Array3::zeros((nb, t, d));
        let mut logvar = Array3::zeros((nb, t, d));
        let mut enc_caches = Vec::with_capacity(nb);
        for b in 0..nb {
            let wave = batch.waves.row(b).to_vec();
            let (m, lv, c) = model.encoder.forward(&wave);
            mu.slice_mut(s![b, .., ..]).assign(&m);
            logvar.slice_mut(s![b, .., ..]).assign(&lv);
            enc_caches.push(c);
        }
        let post = LatentPosterior::new(mu, logvar, batch.frame_mask.clone())?;
        let eps = standard_normal((nb, t, d), derive_seed(cfg.seed, step as u64, SEED_NOISE));
        let z = reparameterize_with(&post, &eps);

        let mut x_hat = Array2::zeros(batch.waves.dim());
        let mut dec_caches = Vec::with_capacity(nb);
        for b in 0..nb {
            let (w, c) = model.decoder.forward(&z.slice(s![b, .., ..]).to_owned());
            x_hat.row_mut(b).assign(&ndarray::ArrayView1::from(&w));
            dec_caches.push(c);
        }
        let recon = self.recon.compute(&batch.waves, &x_hat, &batch.sample_mask)?;
        let kl = kl_loss(&post);

        // Alignment terms and their gradients through the projection, one per component.
        let components = self.scheme.components();
        let mut distill = Vec::new();
        let mut proj_grads: Vec<Projection> = Vec::new();
        let mut dsrc: Vec<Array3<f64>> = Vec::new();
        if !components.is_empty() {
            let teacher = batch
                .teacher
                .clone()
                .ok_or_else(|| Error::Config("scheme needs teacher features".into()))?;
            let src = match cfg.align_target {
                AlignTarget::Sample => &z,
                AlignTarget::Mean => &post.mu,
            };
            let rows = src.to_shape((nb * t, d)).expect("contiguous").to_owned();
            let (y, pcache) = model.projection.forward(&rows);
            let p = model.projection.out_dim();
            let mut zp = y.into_shape_with_order((nb, t, p)).expect("projection shape");
            for ((bi, ti), &m) in batch.frame_mask.indexed_iter() {
                if !m {
                    zp.slice_mut(s![bi, ti, ..]).fill(0.0);
                }
            }
            let zp = FeatureBatch::new(zp, batch.frame_mask.clone())?;
            let f = FeatureBatch::new(teacher, batch.frame_mask.clone())?;
            let ctx = SchemeContext {
                margins: cfg.margins,
                max_pairs_frames: cfg.max_pairs_frames,
            };
            for lv in self.scheme.losses(&zp, &f, &ctx)? {
                let mut dzp = lv.grad;
                for ((bi, ti), &m) in batch.frame_mask.indexed_iter() {
                    if !m {
                        dzp.slice_mut(s![bi, ti, ..]).fill(0.0);
                    }
                }
                let mut g = model.projection.clone();
                g.layers.iter_mut().for_each(|l| {
                    l.weight.fill(0.0);
                    l.bias.fill(0.0);
                });
                let dy = dzp.into_shape_with_order((nb * t, p)).expect("grad shape");
                let dx = model.projection.backward(&pcache, &dy, &mut g);
                dsrc.push(dx.into_shape_with_order((nb, t, d)).expect("grad shape"));
                proj_grads.push(g);
                distill.push(lv.value);
            }
        }

        // Unweighted reconstruction gradient down to z; decoder grads are rescaled below.
        let mut dz_rec = Array3::zeros((nb, t, d));
        for b in 0..nb {
            let dw = recon.grad.row(b).to_vec();
            let dz = model.decoder.backward(&dec_caches[b], &dw, &mut grads.decoder);
            dz_rec.slice_mut(s![b, .., ..]).assign(&dz);
        }
        // ∂z/∂logvar = ε · exp(logvar / 2) / 2
        let mut dz_dlv = eps.clone();
        Zip::from(&mut dz_dlv)
            .and(&post.logvar)
            .for_each(|e, &lv| *e *= 0.5 * (0.5 * lv).exp());

        let adaptive = wcfg.mode == WeightMode::Adaptive && !components.is_empty();
        let (omegas, rec_norm, distill_norms) = if adaptive {
            // L_rec never reaches the projection, so its norm there is identically zero.
            let rec_norm = if wcfg.rec_grad_fallback {
                let mut head = model.encoder.head.clone();
                head.weight.fill(0.0);
                head.bias.fill(0.0);
                self.rec_head_grad(model, &enc_caches, &dz_rec, &dz_dlv, &mut head);
                grad_norm(&[&head.weight, &head.bias])
            } else {
                0.0
            };
            let norms: Vec<f64> = proj_grads.iter().map(|g| grad_norm(&g.params())).collect();
            let omegas = norms.iter().map(|&n| weight_from_norms(rec_norm, n, &wcfg)).collect();
            (omegas, rec_norm, norms)
        } else {
            (vec![1.0; components.len()], 0.0, Vec::new())
        };
        let weights: Vec<f64> = omegas.iter().map(|&o| effective_distill_weight(&wcfg, o)).collect();

        let mut total = cfg.omega_rec * recon.value + cfg.omega_kl * kl.value;
        for (w, l) in weights.iter().zip(&distill) {
            total += w * l;
        }
        let row = LogRow {
            step,
            total_loss: total,
            loss_rec: recon.value,
            loss_kl: kl.value,
            distill,
            omega_rec: cfg.omega_rec,
            omega_kl: cfg.omega_kl,
            weights: weights.clone(),
            lr: cfg.lr_at(step),
        };
        let trace = adaptive.then_some(TraceRow {
            step,
            omegas,
            grad_norm_rec: rec_norm,
            grad_norms: distill_norms,
        });

        // Assemble the total gradient with the weights held constant.
        for p in [&mut grads.decoder.head.weight, &mut grads.decoder.head.bias] {
            scale(p, cfg.omega_rec);
        }
        for st in &mut grads.decoder.stages {
            scale(&mut st.weight, cfg.omega_rec);
            scale(&mut st.bias, cfg.omega_rec);
        }
        let mut dz = dz_rec * cfg.omega_rec;
        let mut dmu_extra = Array3::zeros((nb, t, d));
        for (w, dx) in weights.iter().zip(&dsrc) {
            match cfg.align_target {
                AlignTarget::Sample => dz.scaled_add(*w, dx),
                AlignTarget::Mean => dmu_extra.scaled_add(*w, dx),
            }
        }
        let mut dlv = &dz * &dz_dlv;
        dlv.scaled_add(cfg.omega_kl, &kl.dlogvar);
        let mut dmu = dz;
        dmu.scaled_add(cfg.omega_kl, &kl.dmu);
        dmu += &dmu_extra;
        for (b, cache) in enc_caches.iter().enumerate() {
            let m = dmu.index_axis(Axis(0), b).to_owned();
            let l = dlv.index_axis(Axis(0), b).to_owned();
            model.encoder.backward(cache, &m, &l, &mut grads.encoder);
        }
        for (w, g) in weights.iter().zip(&proj_grads) {
            for (dst, src) in grads.projection.layers.iter_mut().zip(&g.layers) {
                dst.weight.add_scaled(&src.weight, *w);
                dst.bias.add_scaled(&src.bias, *w);
            }
        }
        Ok(StepEval { row, trace, grads })
    }

    fn rec_head_grad(
        &self,
        model: &VaeModel,
        caches: &[crate::vae::EncoderCache],
        dz_rec: &Array3<f64>,
        dz_dlv: &Array3<f64>,
        head: &mut Conv1d,
    ) {
        let dlv = dz_rec * dz_dlv;
        for (b, cache) in caches.iter().enumerate() {
            let m = dz_rec.index_axis(Axis(0), b).to_owned();
            let l = dlv.index_axis(Axis(0), b).to_owned();
            model.encoder.head_grad(cache, &m, &l, head);
        }
    }

    /// Runs from `start` (or a fresh initialization) up to `config.steps`. When
    /// `checkpoint_dir` is given and `checkpoint_every > 0`, intermediate checkpoints
    /// are written to `checkpoint_dir/step_NNNNNN`.
    pub fn run(&self, start: Option<Checkpoint>, checkpoint_dir: Option<&Path>) -> Result<TrainOutcome> {
        let cfg = &self.config;
        let mut ckpt = match start {
            Some(c) => {
                if c.config.hash() != cfg.hash() {
                    return Err(Error::Checkpoint("checkpoint was trained with a different config".into()));
                }
                Checkpoint { config: cfg.clone(), ..c }
            }
            None => Checkpoint::init(cfg)?,
        };
        let components = self.scheme.components();
        let mut log = TrainLog::new(components);
        let mut trace = WeightTrace::new(components);
        while ckpt.step < cfg.steps {
            let step = ckpt.step;
            let batch = self.batch(step);
            let eval = self.evaluate(&ckpt.model, &batch, step)?;
            let bad = eval.row.first_non_finite(&log.components);
            log.rows.push(eval.row);
            if let Some(tr) = eval.trace {
                trace.push(tr)?;
            }
            if let Some(component) = bad {
                ::log::warn!("diverged at step {step}: {component} is not finite");
                log.diverged = Some(Divergence { step, component });
                break;
            }
            let lr = cfg.lr_at(step);
            let grads: Vec<&Param> = eval.grads.params().into_iter().map(|(_, p)| p).collect();
            ckpt.optimizer.step(ckpt.model.params_mut(), grads, lr);
            ckpt.step += 1;
            if step % 100 == 0 {
                let r = log.last().expect("row pushed");
                ::log::info!("step {step}: total {:.6} rec {:.6} kl {:.6}", r.total_loss, r.loss_rec, r.loss_kl);
            }
            if let Some(dir) = checkpoint_dir {
                if cfg.checkpoint_every > 0 && ckpt.step % cfg.checkpoint_every == 0 && ckpt.step < cfg.steps {
                    save_checkpoint(&ckpt, dir.join(format!("step_{:06}", ckpt.step)))?;
                }
            }
        }
        Ok(TrainOutcome {
            checkpoint: ckpt,
            log,
            trace,
        })
    }
}

/// Trains `config.steps` steps from a fresh initialization.
pub fn train(config: &TrainConfig, manifest: &DatasetManifest) -> Result<TrainOutcome> {
    Trainer::new(config.clone(), manifest)?.run(None, None)
}

/// Loss breakdown of the composite objective for one batch, without updating anything.
pub fn composite_loss(trainer: &Trainer, model: &VaeModel, batch: &TrainBatch, step: usize) -> Result<LogRow> {
    trainer.evaluate(model, batch, step).map(|e| e.row)
}
