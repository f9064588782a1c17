//! KL regulariser and waveform reconstruction loss.

use std::sync::Arc;

use ndarray::{Array2, Array3};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::model::LatentPosterior;
use crate::error::{Error, Result};

pub const STFT_WINDOWS: [usize; 3] = [512, 1024, 2048];

#[derive(Debug, Clone)]
pub struct KlValue {
    pub value: f64,
    pub dmu: Array3<f64>,
    pub dlogvar: Array3<f64>,
}

/// Mean over valid frames and latent dims of `0.5·(mu² + exp(logvar) − 1 − logvar)`.
pub fn kl_loss(post: &LatentPosterior) -> KlValue {
    let d = post.latent_dim();
    let n = (post.mask.iter().filter(|&&m| m).count() * d) as f64;
    let mut dmu = Array3::zeros(post.mu.dim());
    let mut dlogvar = Array3::zeros(post.mu.dim());
    let mut total = 0.0;
    if n > 0.0 {
        for ((b, t), &valid) in post.mask.indexed_iter() {
            if !valid {
                continue;
            }
            for k in 0..d {
                let m = post.mu[[b, t, k]];
                let lv = post.logvar[[b, t, k]];
                let e = lv.exp();
                total += 0.5 * (m * m + e - 1.0 - lv);
                dmu[[b, t, k]] = m / n;
                dlogvar[[b, t, k]] = 0.5 * (e - 1.0) / n;
            }
        }
    }
    KlValue {
        value: if n > 0.0 { total / n } else { 0.0 },
        dmu,
        dlogvar,
    }
}

struct StftResolution {
    win: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl StftResolution {
    fn new(win: usize, planner: &mut FftPlanner<f64>) -> Self {
        let window = (0..win)
            .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
            .collect();
        StftResolution {
            win,
            hop: win / 4,
            window,
            fft: planner.plan_fft_forward(win),
        }
    }

    fn n_frames(&self, len: usize) -> usize {
        if len <= self.win {
            1
        } else {
            1 + (len - self.win).div_ceil(self.hop)
        }
    }

    fn bins(&self) -> usize {
        self.win / 2 + 1
    }

    /// Windowed FFT of one frame (zero beyond `signal`), unnormalised.
    fn frame_spectrum(&self, signal: &[f64], start: usize, buf: &mut [Complex<f64>]) {
        for (n, c) in buf.iter_mut().enumerate() {
            let x = signal.get(start + n).copied().unwrap_or(0.0);
            *c = Complex::new(self.window[n] * x, 0.0);
        }
        self.fft.process(buf);
    }
}

/// Waveform L1 plus optional multi-resolution STFT magnitude L1.
///
/// Magnitudes are divided by the window sum so every resolution is on the
/// waveform amplitude scale; the spectral term averages the resolutions.
pub struct ReconLoss {
    resolutions: Vec<StftResolution>,
}

#[derive(Debug, Clone)]
pub struct ReconValue {
    pub value: f64,
    pub waveform_term: f64,
    pub spectral_term: f64,
    /// `∂value/∂x_hat`.
    pub grad: Array2<f64>,
}

impl ReconLoss {
    pub fn new(use_stft: bool) -> Self {
        if use_stft {
            Self::with_windows(&STFT_WINDOWS)
        } else {
            Self::with_windows(&[])
        }
    }

    pub fn with_windows(windows: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        ReconLoss {
            resolutions: windows.iter().map(|&w| StftResolution::new(w, &mut planner)).collect(),
        }
    }

    pub fn windows(&self) -> Vec<usize> {
        self.resolutions.iter().map(|r| r.win).collect()
    }

    /// `x`, `x_hat`, `mask` all `(B, S)`; only samples with `mask = true` count.
    pub fn compute(&self, x: &Array2<f64>, x_hat: &Array2<f64>, mask: &Array2<bool>) -> Result<ReconValue> {
        if x.dim() != x_hat.dim() || x.dim() != mask.dim() {
            return Err(Error::ShapeMismatch(format!(
                "recon inputs {:?} / {:?} / mask {:?}",
                x.dim(),
                x_hat.dim(),
                mask.dim()
            )));
        }
        let (nb, len) = x.dim();
        let n_valid = mask.iter().filter(|&&m| m).count();
        if n_valid == 0 {
            return Err(Error::ShapeMismatch("reconstruction mask has no valid samples".into()));
        }
        let mut grad = Array2::zeros(x.dim());
        let mut l1 = 0.0;
        for ((idx, &m), (&a, &b)) in mask.indexed_iter().zip(x.iter().zip(x_hat.iter())) {
            if m {
                let d = b - a;
                l1 += d.abs();
                grad[idx] = sign(d) / n_valid as f64;
            }
        }
        let waveform_term = l1 / n_valid as f64;

        let mut spectral_term = 0.0;
        if !self.resolutions.is_empty() {
            let share = 1.0 / self.resolutions.len() as f64;
            for res in &self.resolutions {
                let frames = res.n_frames(len);
                let denom = (nb * frames * res.bins()) as f64;
                let wsum = res.window.iter().sum::<f64>();
                let mut fx = vec![Complex::new(0.0, 0.0); res.win];
                let mut fy = vec![Complex::new(0.0, 0.0); res.win];
                let mut back = vec![Complex::new(0.0, 0.0); res.win];
                for b in 0..nb {
                    let xs: Vec<f64> = (0..len).map(|i| if mask[[b, i]] { x[[b, i]] } else { 0.0 }).collect();
                    let ys: Vec<f64> = (0..len).map(|i| if mask[[b, i]] { x_hat[[b, i]] } else { 0.0 }).collect();
                    for fr in 0..frames {
                        let start = fr * res.hop;
                        res.frame_spectrum(&xs, start, &mut fx);
                        res.frame_spectrum(&ys, start, &mut fy);
                        back.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                        for k in 0..res.bins() {
                            let mx = fx[k].norm();
                            let my = fy[k].norm();
                            let diff = (my - mx) / wsum;
                            spectral_term += share * diff.abs() / denom;
                            if my > 0.0 {
                                let g = share * sign(diff) / denom;
                                back[k] = fy[k].conj() * (g / my);
                            }
                        }
                        res.fft.process(&mut back);
                        for n in 0..res.win {
                            let i = start + n;
                            if i < len && mask[[b, i]] {
                                grad[[b, i]] += res.window[n] / wsum * back[n].re;
                            }
                        }
                    }
                }
            }
        }
        Ok(ReconValue {
            value: waveform_term + spectral_term,
            waveform_term,
            spectral_term,
            grad,
        })
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
