#![allow(dead_code)]

use std::path::Path;

use latent_align::featureio::{generate_synthetic_corpus, DatasetManifest, SyntheticSpec};
use latent_align::losses::Margins;
use latent_align::trainer::TrainConfig;
use latent_align::vae::{EncoderConfig, ProjectionConfig, TeacherConfig};

pub fn tiny_corpus(dir: &Path, clips: usize, seconds: f64) -> DatasetManifest {
    let spec = SyntheticSpec {
        num_clips: clips,
        clip_seconds: seconds,
        seed: 11,
        ..Default::default()
    };
    generate_synthetic_corpus(&spec, dir).unwrap()
}

pub fn tiny_config(scheme: &str) -> TrainConfig {
    TrainConfig {
        scheme: scheme.into(),
        margins: (scheme == "jmas").then(|| Margins::new(0.2, 0.1).unwrap()),
        encoder: EncoderConfig {
            base_channels: 2,
            latent_dim: 8,
            ..Default::default()
        },
        projection: ProjectionConfig {
            out_dim: 16,
            ..Default::default()
        },
        teacher: TeacherConfig {
            teacher_dim: 16,
            ..Default::default()
        },
        batch_size: 2,
        crop_samples: 1600,
        steps: 6,
        lr: 1e-3,
        seed: 3,
        ..Default::default()
    }
}

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random `(zp, f, mask)` with B ≤ 4, T ≤ 8, D ≤ 8 and at least one valid frame per sample.
pub fn random_batch(rng: &mut ChaCha8Rng) -> (Array3<f64>, Array3<f64>, Array2<bool>) {
    let b = rng.gen_range(1..=4);
    let t = rng.gen_range(1..=8);
    let d = rng.gen_range(1..=8);
    random_batch_shaped(rng, b, t, d)
}

pub fn random_batch_shaped(rng: &mut ChaCha8Rng, b: usize, t: usize, d: usize) -> (Array3<f64>, Array3<f64>, Array2<bool>) {
    let zp = Array3::from_shape_simple_fn((b, t, d), || rng.gen_range(-2.0..2.0));
    let f = Array3::from_shape_simple_fn((b, t, d), || rng.gen_range(-2.0..2.0));
    let mut mask = Array2::from_shape_simple_fn((b, t), || rng.gen_bool(0.8));
    for bi in 0..b {
        let keep = rng.gen_range(0..t);
        mask[[bi, keep]] = true;
    }
    (zp, f, mask)
}
