use ndarray::{s, Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{derive_seed, TrainConfig, SEED_BATCH};
use crate::error::{Error, Result};
use crate::featureio::{load_waveform, DatasetManifest};
use crate::vae::{build_teacher, valid_frames, ClipInput};

/// One corpus clip with its teacher features at the latent rate.
#[derive(Debug, Clone)]
pub struct Clip {
    pub clip_id: String,
    pub samples: Vec<f64>,
    /// `(ceil(len / hop), teacher_dim)`, present when a teacher is needed.
    pub teacher: Option<Array2<f64>>,
}

/// In-memory training corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub clips: Vec<Clip>,
    pub hop: usize,
}

/// Fixed-length batch of crops.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    /// `(B, crop)`, zero-padded past each clip's end.
    pub waves: Array2<f64>,
    pub sample_mask: Array2<bool>,
    pub frame_mask: Array2<bool>,
    /// `(B, T, teacher_dim)`, zero on masked frames.
    pub teacher: Option<Array3<f64>>,
}

impl Corpus {
    /// Validates the manifest, loads every waveform and, if `with_teacher`, computes
    /// teacher features per clip. All failures happen here, before any training step.
    pub fn load(manifest: &DatasetManifest, config: &TrainConfig, with_teacher: bool) -> Result<Self> {
        let hop = config.encoder.hop();
        manifest.validate(hop, config.teacher.teacher_rate)?;
        let teacher = if with_teacher {
            Some(build_teacher(&config.teacher, &config.encoder)?)
        } else {
            None
        };
        let mut clips = Vec::with_capacity(manifest.len());
        for (i, entry) in manifest.entries.iter().enumerate() {
            let wave = load_waveform(manifest.waveform_path(i))?;
            if wave.samples.len() < hop {
                return Err(Error::InputTooShort { samples: wave.samples.len(), hop });
            }
            let features = match &teacher {
                Some(t) => {
                    let tp = manifest.teacher_path(i);
                    let input = ClipInput {
                        waveform: &wave.samples,
                        teacher_path: tp.as_deref(),
                        latent_frames: wave.samples.len().div_ceil(hop),
                    };
                    let f = t.features(&input)?;
                    if f.ncols() != config.projection.out_dim {
                        return Err(Error::ShapeMismatch(format!(
                            "clip {}: teacher dim {} != projection out_dim {}",
                            entry.clip_id,
                            f.ncols(),
                            config.projection.out_dim
                        )));
                    }
                    Some(f)
                }
                None => None,
            };
            clips.push(Clip {
                clip_id: entry.clip_id.clone(),
                samples: wave.samples,
                teacher: features,
            });
        }
        Ok(Corpus { clips, hop })
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Batch from `(clip index, sample offset)` picks; offsets are multiples of the hop.
    pub fn crop(&self, picks: &[(usize, usize)], crop: usize) -> TrainBatch {
        let hop = self.hop;
        let t = crop / hop;
        let b = picks.len();
        let with_teacher = self.clips.first().is_some_and(|c| c.teacher.is_some());
        let mut waves = Array2::zeros((b, crop));
        let mut sample_mask = Array2::from_elem((b, crop), false);
        let mut frame_mask = Array2::from_elem((b, t), false);
        let mut teacher = with_teacher.then(|| {
            let d = self.clips[0].teacher.as_ref().map_or(0, |f| f.ncols());
            Array3::zeros((b, t, d))
        });
        for (i, &(ci, offset)) in picks.iter().enumerate() {
            let clip = &self.clips[ci];
            let end = (offset + crop).min(clip.samples.len());
            let len = end - offset;
            waves
                .slice_mut(s![i, ..len])
                .assign(&ndarray::ArrayView1::from(&clip.samples[offset..end]));
            let nv = valid_frames(len, hop);
            sample_mask.slice_mut(s![i, ..nv * hop]).fill(true);
            frame_mask.slice_mut(s![i, ..nv]).fill(true);
            if let (Some(tb), Some(f)) = (teacher.as_mut(), clip.teacher.as_ref()) {
                let f0 = offset / hop;
                tb.slice_mut(s![i, ..nv, ..]).assign(&f.slice(s![f0..f0 + nv, ..]));
            }
        }
        TrainBatch {
            waves,
            sample_mask,
            frame_mask,
            teacher,
        }
    }

    /// Deterministic batch for `step`: clips drawn with replacement, frame-aligned offsets.
    pub fn batch(&self, config: &TrainConfig, step: usize) -> TrainBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, step as u64, SEED_BATCH));
        let crop = config.crop_samples;
        let picks: Vec<(usize, usize)> = (0..config.batch_size)
            .map(|_| {
                let ci = rng.gen_range(0..self.clips.len());
                let len = self.clips[ci].samples.len();
                let max_off = len.saturating_sub(crop) / self.hop;
                (ci, self.hop * rng.gen_range(0..=max_off))
            })
            .collect();
        self.crop(&picks, crop)
    }
}
