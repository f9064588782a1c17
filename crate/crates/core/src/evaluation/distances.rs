use ndarray::{s, Array2, Array3};

use crate::error::{Error, Result};
use crate::featureio::DatasetManifest;
use crate::losses::{align_distances, FeatureBatch};
use crate::trainer::{Checkpoint, Corpus};
use crate::vae::{valid_frames, ReconLoss, VaeModel};

/// Corpus-averaged alignment distances between projected posterior means and teacher features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceReport {
    pub d_mcos: f64,
    pub d_mdss: f64,
    pub clips: usize,
}

fn eval_crop(samples: &[f64], eval_samples: usize) -> &[f64] {
    &samples[..samples.len().min(eval_samples)]
}

/// Each clip is evaluated on its first `eval_samples` samples with the posterior mean.
pub fn distance_report(model: &VaeModel, corpus: &Corpus, eval_samples: usize) -> Result<DistanceReport> {
    if corpus.is_empty() {
        return Err(Error::Validation("empty corpus".into()));
    }
    let hop = model.hop();
    if hop != corpus.hop {
        return Err(Error::ShapeMismatch(format!("model hop {hop} != corpus hop {}", corpus.hop)));
    }
    let (mut mcos, mut mdss) = (0.0, 0.0);
    for clip in &corpus.clips {
        let feats = clip
            .teacher
            .as_ref()
            .ok_or_else(|| Error::Config("corpus was loaded without teacher features".into()))?;
        if feats.ncols() != model.projection.out_dim() {
            return Err(Error::ShapeMismatch(format!(
                "teacher dim {} != projection out_dim {}",
                feats.ncols(),
                model.projection.out_dim()
            )));
        }
        let x = eval_crop(&clip.samples, eval_samples);
        let post = model.encode_clips(&[x])?;
        let zp = model.project(&post.mu, &post.mask)?;
        let t = post.frames();
        let nv = valid_frames(x.len(), hop);
        let mut f = Array3::zeros((1, t, feats.ncols()));
        f.slice_mut(s![0, ..nv, ..]).assign(&feats.slice(s![..nv, ..]));
        let f = FeatureBatch::new(f, post.mask.clone())?;
        let (a, b) = align_distances(&zp, &f)?;
        mcos += a;
        mdss += b;
    }
    let n = corpus.len() as f64;
    Ok(DistanceReport {
        d_mcos: mcos / n,
        d_mdss: mdss / n,
        clips: corpus.len(),
    })
}

/// Loads the corpus with the checkpoint's own teacher settings and reports distances
/// on crops of the training crop length.
pub fn checkpoint_distances(ckpt: &Checkpoint, manifest: &DatasetManifest) -> Result<DistanceReport> {
    let corpus = Corpus::load(manifest, &ckpt.config, true)?;
    distance_report(&ckpt.model, &corpus, ckpt.config.crop_samples)
}

/// `1 - Σ recon(x, decode(mu)) / Σ recon(x, 0)` over the evaluation crops.
pub fn recon_proxy(model: &VaeModel, corpus: &Corpus, eval_samples: usize, loss: &ReconLoss) -> Result<f64> {
    let hop = model.hop();
    let (mut num, mut den) = (0.0, 0.0);
    for clip in &corpus.clips {
        let x = eval_crop(&clip.samples, eval_samples);
        let post = model.encode_clips(&[x])?;
        let x_hat = model.decode(&post.mu)?;
        let len = x_hat.ncols();
        let mut xs = Array2::zeros((1, len));
        xs.slice_mut(s![0, ..x.len()]).assign(&ndarray::ArrayView1::from(x));
        let mut mask = Array2::from_elem((1, len), false);
        mask.slice_mut(s![0, ..valid_frames(x.len(), hop) * hop]).fill(true);
        num += loss.compute(&xs, &x_hat, &mask)?.value;
        den += loss.compute(&xs, &Array2::zeros((1, len)), &mask)?.value;
    }
    if !(den > 0.0) {
        return Err(Error::Validation("silent corpus: reconstruction proxy undefined".into()));
    }
    Ok(1.0 - num / den)
}
