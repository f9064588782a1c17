//! Sources of teacher features at the latent frame rate.

use std::path::Path;

use ndarray::{s, Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{EncoderConfig, Resample, TeacherConfig, TeacherKind};
use super::model::{valid_frames, Encoder};
use crate::error::{Error, Result};
use crate::featureio::read_tensor;
use crate::losses::FeatureBatch;
use crate::nn::Linear;

/// One clip as seen by a teacher.
#[derive(Debug, Clone, Copy)]
pub struct ClipInput<'a> {
    /// Unpadded samples.
    pub waveform: &'a [f64],
    pub teacher_path: Option<&'a Path>,
    /// Latent frames of the padded clip, `ceil(len / hop)`.
    pub latent_frames: usize,
}

pub trait Teacher: Send + Sync {
    fn kind(&self) -> TeacherKind;

    fn dim(&self) -> usize;

    /// Features of one clip as `(latent_frames, dim)`.
    fn features(&self, clip: &ClipInput<'_>) -> Result<Array2<f64>>;
}

/// Never-trained conv stack with the encoder's architecture and hop, followed by a
/// fixed linear readout to `teacher_dim`. Weights depend only on the seed.
#[derive(Debug, Clone)]
pub struct FrozenRandomTeacher {
    pub stack: Encoder,
    pub readout: Linear,
    hop: usize,
}

impl FrozenRandomTeacher {
    pub fn new(enc: &EncoderConfig, cfg: &TeacherConfig) -> Result<Self> {
        enc.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let stack = Encoder::new(enc, &mut rng);
        let mut readout = Linear::new(enc.latent_dim, cfg.teacher_dim, &mut rng);
        readout.bias.fill(0.0);
        Ok(FrozenRandomTeacher {
            stack,
            readout,
            hop: enc.hop(),
        })
    }
}

impl Teacher for FrozenRandomTeacher {
    fn kind(&self) -> TeacherKind {
        TeacherKind::FrozenRandom
    }

    fn dim(&self) -> usize {
        self.readout.d_out()
    }

    fn features(&self, clip: &ClipInput<'_>) -> Result<Array2<f64>> {
        let mut padded = clip.waveform.to_vec();
        padded.resize(clip.latent_frames * self.hop, 0.0);
        let (mu, _, _) = self.stack.forward(&padded);
        Ok(self.readout.forward(&mu))
    }
}

/// Precomputed `(frames, dim)` `.ftf` features, resampled to the latent rate.
#[derive(Debug, Clone)]
pub struct FileTeacher {
    dim: usize,
    resample: Resample,
}

impl FileTeacher {
    pub fn new(cfg: &TeacherConfig) -> Self {
        FileTeacher {
            dim: cfg.teacher_dim,
            resample: cfg.resample,
        }
    }
}

impl Teacher for FileTeacher {
    fn kind(&self) -> TeacherKind {
        TeacherKind::FromFiles
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn features(&self, clip: &ClipInput<'_>) -> Result<Array2<f64>> {
        let path = clip
            .teacher_path
            .ok_or_else(|| Error::Manifest("clip has no teacher_path".into()))?;
        let t = read_tensor(path)?;
        let dims = t.dims();
        if dims.len() != 2 || dims[1] != self.dim {
            return Err(Error::ShapeMismatch(format!(
                "teacher file {} has shape {dims:?}, expected (frames, {})",
                path.display(),
                self.dim
            )));
        }
        let src = Array2::from_shape_vec((dims[0], dims[1]), t.to_f64()).expect("checked shape");
        Ok(resample(&src, clip.latent_frames, self.resample))
    }
}

pub fn build_teacher(cfg: &TeacherConfig, enc: &EncoderConfig) -> Result<Box<dyn Teacher>> {
    cfg.validate()?;
    Ok(match cfg.kind {
        TeacherKind::FrozenRandom => Box::new(FrozenRandomTeacher::new(enc, cfg)?),
        TeacherKind::FromFiles => Box::new(FileTeacher::new(cfg)),
    })
}

pub fn resample(src: &Array2<f64>, t_out: usize, how: Resample) -> Array2<f64> {
    match how {
        Resample::LinearInterp => resample_linear(src, t_out),
        Resample::MeanPool => resample_mean_pool(src, t_out),
    }
}

/// Linear interpolation along time with endpoints aligned.
pub fn resample_linear(src: &Array2<f64>, t_out: usize) -> Array2<f64> {
    let (t_in, d) = src.dim();
    if t_in == t_out {
        return src.clone();
    }
    let mut out = Array2::zeros((t_out, d));
    for j in 0..t_out {
        let pos = if t_out == 1 {
            0.0
        } else {
            j as f64 * (t_in - 1) as f64 / (t_out - 1) as f64
        };
        let lo = (pos.floor() as usize).min(t_in - 1);
        let hi = (lo + 1).min(t_in - 1);
        let w = pos - lo as f64;
        let row = &src.row(lo) * (1.0 - w) + &src.row(hi) * w;
        out.row_mut(j).assign(&row);
    }
    out
}

/// Each output frame averages the source frames overlapping its time span.
pub fn resample_mean_pool(src: &Array2<f64>, t_out: usize) -> Array2<f64> {
    let (t_in, d) = src.dim();
    if t_in == t_out {
        return src.clone();
    }
    let mut out = Array2::zeros((t_out, d));
    for j in 0..t_out {
        let lo = (j * t_in) / t_out;
        let hi = ((j + 1) * t_in).div_ceil(t_out).max(lo + 1).min(t_in);
        let lo = lo.min(hi - 1);
        let mean = src.slice(s![lo..hi, ..]).mean_axis(ndarray::Axis(0)).expect("non-empty");
        out.row_mut(j).assign(&mean);
    }
    out
}

/// Teacher features for a batch of clips, carrying the latent mask.
pub fn teacher_features(teacher: &dyn Teacher, clips: &[ClipInput<'_>], hop: usize) -> Result<FeatureBatch> {
    let t = clips.iter().map(|c| c.latent_frames).max().unwrap_or(0);
    let mut values = Array3::zeros((clips.len(), t, teacher.dim()));
    let mut mask = Array2::from_elem((clips.len(), t), false);
    for (b, clip) in clips.iter().enumerate() {
        let f = teacher.features(clip)?;
        if f.dim() != (clip.latent_frames, teacher.dim()) {
            return Err(Error::ShapeMismatch(format!(
                "teacher produced {:?}, expected ({}, {})",
                f.dim(),
                clip.latent_frames,
                teacher.dim()
            )));
        }
        let n_valid = valid_frames(clip.waveform.len(), hop);
        values.slice_mut(s![b, ..n_valid, ..]).assign(&f.slice(s![..n_valid, ..]));
        mask.slice_mut(s![b, ..n_valid]).fill(true);
    }
    FeatureBatch::new(values, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featureio::{write_tensor, TensorFile};

    fn cfgs() -> (EncoderConfig, TeacherConfig) {
        (
            EncoderConfig::default(),
            TeacherConfig {
                teacher_dim: 16,
                ..TeacherConfig::default()
            },
        )
    }

    #[test]
    fn frozen_teacher_is_deterministic() {
        let (enc, cfg) = cfgs();
        let wave: Vec<f64> = (0..16000).map(|i| (i as f64 * 0.02).sin() * 0.5).collect();
        let clip = ClipInput {
            waveform: &wave,
            teacher_path: None,
            latent_frames: 40,
        };
        let a = build_teacher(&cfg, &enc).unwrap().features(&clip).unwrap();
        let b = build_teacher(&cfg, &enc).unwrap().features(&clip).unwrap();
        assert_eq!(a.dim(), (40, 16));
        assert_eq!(a, b);
    }

    #[test]
    fn file_teacher_identity_when_rates_match() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ftf");
        let data: Vec<f32> = (0..40 * 16).map(|i| i as f32 * 0.5).collect();
        write_tensor(&p, &TensorFile::from_f32(&[40, 16], data.clone()).unwrap()).unwrap();
        let (_, mut cfg) = cfgs();
        cfg.kind = TeacherKind::FromFiles;
        let wave = vec![0.0; 16000];
        let t = FileTeacher::new(&cfg);
        let f = t
            .features(&ClipInput {
                waveform: &wave,
                teacher_path: Some(&p),
                latent_frames: 40,
            })
            .unwrap();
        assert_eq!(f.iter().copied().collect::<Vec<_>>(), data.iter().map(|&x| x as f64).collect::<Vec<_>>());
        let missing = t.features(&ClipInput {
            waveform: &wave,
            teacher_path: None,
            latent_frames: 40,
        });
        assert!(missing.is_err());
        let mut wrong = cfg.clone();
        wrong.teacher_dim = 8;
        assert!(FileTeacher::new(&wrong)
            .features(&ClipInput {
                waveform: &wave,
                teacher_path: Some(&p),
                latent_frames: 40
            })
            .is_err());
    }

    #[test]
    fn linear_resample_ramp() {
        let src = Array2::from_shape_fn((50, 1), |(t, _)| t as f64 / 49.0);
        let out = resample_linear(&src, 40);
        assert_eq!(out.nrows(), 40);
        assert!((out[[0, 0]] - 0.0).abs() < 1e-15);
        assert!((out[[39, 0]] - 1.0).abs() < 1e-15);
        for j in 1..40 {
            assert!(out[[j, 0]] > out[[j - 1, 0]]);
            // a linear ramp is reproduced exactly
            assert!((out[[j, 0]] - j as f64 / 39.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_pool_averages() {
        let src = Array2::from_shape_fn((4, 1), |(t, _)| t as f64);
        let out = resample_mean_pool(&src, 2);
        assert_eq!(out.column(0).to_vec(), vec![0.5, 2.5]);
        let up = resample_mean_pool(&src, 8);
        assert_eq!(up.nrows(), 8);
        assert_eq!(up[[0, 0]], 0.0);
        assert_eq!(up[[7, 0]], 3.0);
    }

    #[test]
    fn batch_features_carry_latent_mask() {
        let (enc, cfg) = cfgs();
        let teacher = build_teacher(&cfg, &enc).unwrap();
        let a = vec![0.1; 800];
        let b = vec![0.2; 1000];
        let clips = [
            ClipInput { waveform: &a, teacher_path: None, latent_frames: 2 },
            ClipInput { waveform: &b, teacher_path: None, latent_frames: 3 },
        ];
        let fb = teacher_features(teacher.as_ref(), &clips, 400).unwrap();
        assert_eq!(fb.dim(), (2, 3, 16));
        assert_eq!(fb.mask(), &ndarray::array![[true, true, false], [true, true, false]]);
    }
}
