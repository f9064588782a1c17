use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::losses::{Margins, DEFAULT_MAX_PAIRS_FRAMES};
use crate::scheme::SchemeRegistry;
use crate::vae::{EncoderConfig, ProjectionConfig, TeacherConfig};
use crate::weighting::{WeightConfig, WeightMode};

/// Which latent sequence feeds the projection head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlignTarget {
    /// The reparameterized sample `z`.
    #[default]
    Sample,
    /// The posterior mean.
    Mean,
}

/// Full experiment configuration. JSON keys are the field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub scheme: String,
    pub adaptive: bool,
    pub margins: Option<Margins>,
    pub omega_rec: f64,
    pub omega_kl: f64,
    /// `mode` is overridden by `adaptive`.
    pub weight_config: WeightConfig,
    pub lr: f64,
    pub lr_decay_gamma: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
    pub encoder: EncoderConfig,
    pub projection: ProjectionConfig,
    pub teacher: TeacherConfig,
    pub crop_samples: usize,
    pub align_target: AlignTarget,
    pub use_stft: bool,
    pub max_pairs_frames: usize,
    /// Save an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub strict_determinism: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: "vanilla".into(),
            adaptive: false,
            margins: None,
            omega_rec: 1.0,
            omega_kl: 0.001,
            weight_config: WeightConfig::default(),
            lr: 1e-4,
            lr_decay_gamma: 0.999996,
            batch_size: 4,
            steps: 1000,
            seed: 0,
            encoder: EncoderConfig::default(),
            projection: ProjectionConfig::default(),
            teacher: TeacherConfig::default(),
            crop_samples: 16000,
            align_target: AlignTarget::Sample,
            use_stft: true,
            max_pairs_frames: DEFAULT_MAX_PAIRS_FRAMES,
            checkpoint_every: 0,
            strict_determinism: false,
        }
    }
}

/// Keys that only control run length or bookkeeping; a checkpoint stays valid when they change.
const HASH_EXCLUDED: [&str; 3] = ["steps", "checkpoint_every", "strict_determinism"];

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Weighting settings with the mode taken from `adaptive`.
    pub fn weighting(&self) -> WeightConfig {
        WeightConfig {
            mode: if self.adaptive { WeightMode::Adaptive } else { WeightMode::Static },
            ..self.weight_config.clone()
        }
    }

    /// Learning rate used for the update at 0-based `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        self.lr * self.lr_decay_gamma.powi(step as i32)
    }

    pub fn validate(&self, registry: &SchemeRegistry) -> Result<()> {
        let scheme = registry.get(&self.scheme)?;
        if scheme.requires_margins() {
            match self.margins {
                Some(m) => m.validate()?,
                None => return Err(Error::Config(format!("scheme {} requires margins", self.scheme))),
            }
        }
        let positive = [("lr", self.lr), ("lr_decay_gamma", self.lr_decay_gamma)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if self.lr_decay_gamma > 1.0 {
            return Err(Error::Config(format!("lr_decay_gamma {} must be <= 1", self.lr_decay_gamma)));
        }
        for (name, v) in [("omega_rec", self.omega_rec), ("omega_kl", self.omega_kl)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.max_pairs_frames == 0 {
            return Err(Error::Config("max_pairs_frames must be positive".into()));
        }
        self.weight_config.validate()?;
        self.encoder.validate()?;
        self.teacher.validate()?;
        let hop = self.encoder.hop();
        if self.crop_samples < hop || !self.crop_samples.is_multiple_of(hop) {
            return Err(Error::Config(format!(
                "crop_samples {} must be a positive multiple of the hop {hop}",
                self.crop_samples
            )));
        }
        if self.projection.out_dim != self.teacher.teacher_dim {
            return Err(Error::Config(format!(
                "projection out_dim {} != teacher_dim {}",
                self.projection.out_dim, self.teacher.teacher_dim
            )));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring run-length keys.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            for k in HASH_EXCLUDED {
                obj.remove(k);
            }
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) const SEED_INIT: u64 = 1;
pub(crate) const SEED_NOISE: u64 = 2;
pub(crate) const SEED_BATCH: u64 = 3;

/// Independent stream seed for `(base, index, purpose)`.
pub(crate) fn derive_seed(base: u64, index: u64, purpose: u64) -> u64 {
    mix64(mix64(base ^ mix64(purpose)) ^ index)
}
