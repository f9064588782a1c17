use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub downsample_factors: Vec<usize>,
    pub latent_dim: usize,
    pub base_channels: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            downsample_factors: vec![4, 4, 5, 5],
            latent_dim: 64,
            base_channels: 16,
            activation: Activation::Elu,
        }
    }
}

impl EncoderConfig {
    /// Samples per latent frame.
    pub fn hop(&self) -> usize {
        self.downsample_factors.iter().product()
    }

    /// Channel count after each downsampling stage: `base · 2^i`.
    pub fn stage_channels(&self) -> Vec<usize> {
        (0..self.downsample_factors.len())
            .map(|i| self.base_channels << i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.downsample_factors.is_empty() || self.downsample_factors.contains(&0) {
            return Err(Error::Config(format!(
                "downsample_factors {:?} must be non-empty positive integers",
                self.downsample_factors
            )));
        }
        if self.latent_dim == 0 || self.base_channels == 0 {
            return Err(Error::Config("latent_dim and base_channels must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionConfig {
    pub out_dim: usize,
    pub hidden_layers: usize,
    pub hidden_dim: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            out_dim: 1024,
            hidden_layers: 0,
            hidden_dim: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TeacherKind {
    #[default]
    FrozenRandom,
    FromFiles,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    #[default]
    LinearInterp,
    MeanPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherConfig {
    pub kind: TeacherKind,
    pub teacher_dim: usize,
    pub teacher_rate: f64,
    pub resample: Resample,
    /// Initialisation seed of the frozen random teacher.
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            kind: TeacherKind::FrozenRandom,
            teacher_dim: 1024,
            teacher_rate: 40.0,
            resample: Resample::LinearInterp,
            seed: 0x7eac,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.teacher_dim == 0 {
            return Err(Error::Config("teacher_dim must be positive".into()));
        }
        if !(self.teacher_rate > 0.0) {
            return Err(Error::Config(format!("teacher_rate {} must be positive", self.teacher_rate)));
        }
        Ok(())
    }
}
