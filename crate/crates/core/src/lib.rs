//! Training and evaluation toolkit for speech VAEs whose latents are distilled toward
//! features of a frozen teacher model.
//!
//! The pieces, bottom up:
//! - [`featureio`]: tensor files, 16 kHz PCM waveforms, manifests, a synthetic corpus.
//! - [`losses`]: masked cosine alignment losses over `(B, T, D)` feature batches.
//! - [`nn`] and [`vae`]: f64 layers with hand-written backward passes,
//!   the encoder/decoder/projection model, KL and multi-resolution STFT losses.
//! - [`scheme`]: the distillation scheme registry (`vanilla`, `tas`, `das`, `jmas`).
//! - [`weighting`]: gradient-norm based adaptive weights for the distillation terms.
//! - [`trainer`]: deterministic Adam training with checkpoints and CSV logs.
//! - [`evaluation`]: score aggregation, alignment distances, margin grids, correlations.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod evaluation;
pub mod featureio;
pub mod losses;
pub mod nn;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod scheme;
pub mod trainer;
pub mod vae;
pub mod weighting;

pub use error::{Error, Result};
