//! Slow reference implementations used to validate the production code.
//!
//! Everything here is written as direct nested loops over the definitions and
//! shares no code with the optimized paths.

use ndarray::{Array2, Array3};

const EPS: f64 = 1e-8;

pub fn cos(u: &[f64], v: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for i in 0..u.len() {
        dot += u[i] * v[i];
        nu += u[i] * u[i];
        nv += v[i] * v[i];
    }
    let c = dot / (nu.sqrt().max(EPS) * nv.sqrt().max(EPS));
    c.clamp(-1.0, 1.0)
}

fn frame(a: &Array3<f64>, b: usize, t: usize) -> Vec<f64> {
    (0..a.dim().2).map(|d| a[[b, t, d]]).collect()
}

fn neg_log_sigmoid(c: f64) -> f64 {
    (1.0 + (-c).exp()).ln()
}

pub fn loss_t(zp: &Array3<f64>, f: &Array3<f64>, mask: &Array2<bool>) -> f64 {
    let (nb, nt, _) = zp.dim();
    let mut sum = 0.0;
    let mut n = 0.0;
    for b in 0..nb {
        for t in 0..nt {
            if mask[[b, t]] {
                sum += neg_log_sigmoid(cos(&frame(zp, b, t), &frame(f, b, t)));
                n += 1.0;
            }
        }
    }
    sum / n
}

pub fn loss_d(zp: &Array3<f64>, f: &Array3<f64>, mask: &Array2<bool>) -> f64 {
    let (nb, nt, nd) = zp.dim();
    let mut sum = 0.0;
    for b in 0..nb {
        for d in 0..nd {
            let mut u = Vec::new();
            let mut v = Vec::new();
            for t in 0..nt {
                if mask[[b, t]] {
                    u.push(zp[[b, t, d]]);
                    v.push(f[[b, t, d]]);
                }
            }
            sum += neg_log_sigmoid(cos(&u, &v));
        }
    }
    sum / (nb * nd) as f64
}

pub fn loss_mcos(zp: &Array3<f64>, f: &Array3<f64>, mask: &Array2<bool>, m1: f64) -> f64 {
    let (nb, nt, _) = zp.dim();
    let mut sum = 0.0;
    let mut n = 0.0;
    for b in 0..nb {
        for t in 0..nt {
            if mask[[b, t]] {
                sum += (1.0 - m1 - cos(&frame(zp, b, t), &frame(f, b, t))).max(0.0);
                n += 1.0;
            }
        }
    }
    sum / n
}

/// All valid frames of the batch pooled; every ordered pair, diagonal included.
pub fn loss_mdss(zp: &Array3<f64>, f: &Array3<f64>, mask: &Array2<bool>, m2: f64) -> f64 {
    let (nb, nt, _) = zp.dim();
    let mut zs = Vec::new();
    let mut fs = Vec::new();
    for b in 0..nb {
        for t in 0..nt {
            if mask[[b, t]] {
                zs.push(frame(zp, b, t));
                fs.push(frame(f, b, t));
            }
        }
    }
    let n = zs.len();
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            let gap = (cos(&zs[i], &zs[j]) - cos(&fs[i], &fs[j])).abs();
            sum += (gap - m2).max(0.0);
        }
    }
    sum / (n * n) as f64
}

pub fn kl(mu: &Array3<f64>, logvar: &Array3<f64>, mask: &Array2<bool>) -> f64 {
    let (nb, nt, nd) = mu.dim();
    let mut sum = 0.0;
    let mut n = 0.0;
    for b in 0..nb {
        for t in 0..nt {
            if !mask[[b, t]] {
                continue;
            }
            for d in 0..nd {
                let m = mu[[b, t, d]];
                let lv = logvar[[b, t, d]];
                sum += 0.5 * (m * m + lv.exp() - 1.0 - lv);
                n += 1.0;
            }
        }
    }
    sum / n
}

/// Magnitude spectrogram by direct DFT: periodic Hann window, hop `win / 4`,
/// frames zero-padded past the end, magnitudes divided by the window sum.
pub fn stft_magnitudes(x: &[f64], win: usize) -> Vec<Vec<f64>> {
    let hop = win / 4;
    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())
        .collect();
    let wsum: f64 = window.iter().sum();
    let frames = if x.len() <= win { 1 } else { 1 + (x.len() - win).div_ceil(hop) };
    let mut out = Vec::new();
    for fr in 0..frames {
        let mut mags = Vec::new();
        for k in 0..=win / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for n in 0..win {
                let s = x.get(fr * hop + n).copied().unwrap_or(0.0) * window[n];
                let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / win as f64;
                re += s * ang.cos();
                im += s * ang.sin();
            }
            mags.push((re * re + im * im).sqrt() / wsum);
        }
        out.push(mags);
    }
    out
}

/// Waveform L1 over valid samples plus the mean over `windows` of spectral L1
/// computed on the masked signals.
pub fn recon(x: &Array2<f64>, x_hat: &Array2<f64>, mask: &Array2<bool>, windows: &[usize]) -> f64 {
    let (nb, len) = x.dim();
    let mut l1 = 0.0;
    let mut n = 0.0;
    for b in 0..nb {
        for i in 0..len {
            if mask[[b, i]] {
                l1 += (x_hat[[b, i]] - x[[b, i]]).abs();
                n += 1.0;
            }
        }
    }
    let mut spec = 0.0;
    for &w in windows {
        let mut sum = 0.0;
        let mut count = 0.0;
        for b in 0..nb {
            let xs: Vec<f64> = (0..len).map(|i| if mask[[b, i]] { x[[b, i]] } else { 0.0 }).collect();
            let ys: Vec<f64> = (0..len).map(|i| if mask[[b, i]] { x_hat[[b, i]] } else { 0.0 }).collect();
            let (sx, sy) = (stft_magnitudes(&xs, w), stft_magnitudes(&ys, w));
            for (fx, fy) in sx.iter().zip(&sy) {
                for (a, c) in fx.iter().zip(fy) {
                    sum += (c - a).abs();
                    count += 1.0;
                }
            }
        }
        spec += sum / count;
    }
    if !windows.is_empty() {
        spec /= windows.len() as f64;
    }
    l1 / n + spec
}

/// Central difference of `f` with respect to every element of `x`.
pub fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_constant_is_dc_only() {
        let m = stft_magnitudes(&[1.0; 512], 512);
        assert_eq!(m.len(), 1);
        assert!((m[0][0] - 1.0).abs() < 1e-12);
        assert!((m[0][1] - 0.5).abs() < 1e-12);
        assert!(m[0][5] < 1e-9);
    }

    #[test]
    fn central_diff_of_quadratic() {
        let g = central_diff(|x| x[0] * x[0] + 3.0 * x[1], &[2.0, 1.0], 1e-5);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }
}
