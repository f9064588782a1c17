//! Deterministic harmonic-plus-noise corpus generator.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ManifestEntry};
use super::wav::{write_waveform, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Total encoder downsampling; clip lengths must be a multiple of it.
const HOP: usize = 400;
const MAX_PEAK: f64 = 0.89;
const MIN_PEAK: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeFamily {
    Hann,
    Decay,
    Plateau,
    /// Picks one of the other shapes per clip.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_clips: usize,
    pub clip_seconds: f64,
    pub seed: u64,
    pub min_harmonics: usize,
    pub max_harmonics: usize,
    pub noise_floor: f64,
    pub envelope: EnvelopeFamily,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_clips: 200,
            clip_seconds: 1.0,
            seed: 0,
            min_harmonics: 1,
            max_harmonics: 4,
            noise_floor: 0.005,
            envelope: EnvelopeFamily::Mixed,
        }
    }
}

impl SyntheticSpec {
    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * SAMPLE_RATE as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clips == 0 {
            return Err(Error::Config("num_clips must be at least 1".into()));
        }
        let exact = self.clip_seconds * SAMPLE_RATE as f64;
        let n = self.clip_samples();
        if !(self.clip_seconds > 0.0) || (exact - n as f64).abs() > 1e-6 || n == 0 || !n.is_multiple_of(HOP) {
            return Err(Error::Config(format!(
                "clip_seconds {} must give a positive sample count divisible by {HOP}",
                self.clip_seconds
            )));
        }
        if self.min_harmonics == 0 || self.min_harmonics > self.max_harmonics {
            return Err(Error::Config(format!(
                "harmonic range {}..={} is invalid",
                self.min_harmonics, self.max_harmonics
            )));
        }
        if !(0.0..0.1).contains(&self.noise_floor) {
            return Err(Error::Config(format!("noise_floor {} outside [0, 0.1)", self.noise_floor)));
        }
        Ok(())
    }
}

fn envelope(family: EnvelopeFamily, t: f64, dur: f64, decay_rate: f64) -> f64 {
    match family {
        EnvelopeFamily::Hann => (PI * t / dur).sin().powi(2),
        EnvelopeFamily::Decay => (1.0 - (-t / 0.01).exp()) * (-decay_rate * t).exp(),
        EnvelopeFamily::Plateau => {
            let fade = 0.05f64.min(dur / 4.0);
            let edge = t.min(dur - t);
            if edge >= fade {
                1.0
            } else {
                0.5 - 0.5 * (PI * edge.max(0.0) / fade).cos()
            }
        }
        EnvelopeFamily::Mixed => unreachable!("resolved per clip"),
    }
}

/// Synthesizes one clip: 1 to 3 note segments, each a gliding harmonic stack,
/// crossfaded, shaped by an envelope, plus a Gaussian noise floor.
pub fn synthesize_clip(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = spec.clip_samples();
    let dur = n as f64 / SAMPLE_RATE as f64;
    let family = match spec.envelope {
        EnvelopeFamily::Mixed => [EnvelopeFamily::Hann, EnvelopeFamily::Decay, EnvelopeFamily::Plateau]
            [rng.gen_range(0..3)],
        f => f,
    };
    let decay_rate = rng.gen_range(1.0..4.0) / dur;
    let segments = rng.gen_range(1..=3usize);
    let bounds: Vec<f64> = (0..=segments).map(|k| dur * k as f64 / segments as f64).collect();
    let xfade = 0.02f64.min(dur / (4.0 * segments as f64));

    let mut out = vec![0.0; n];
    for seg in 0..segments {
        let f0 = rng.gen_range(90.0..350.0);
        let glide = rng.gen_range(-0.2..0.2);
        let n_harm = rng.gen_range(spec.min_harmonics..=spec.max_harmonics);
        let partials: Vec<(f64, f64, f64)> = (1..=n_harm)
            .map(|h| {
                let amp = rng.gen_range(0.3..1.0) / h as f64;
                let phase = rng.gen_range(0.0..2.0 * PI);
                (h as f64, amp, phase)
            })
            .collect();
        let (start, end) = (bounds[seg], bounds[seg + 1]);
        for (i, o) in out.iter_mut().enumerate() {
            let t = i as f64 / SAMPLE_RATE as f64;
            let gate = segment_gate(t, start, end, xfade, seg == 0, seg + 1 == segments);
            if gate == 0.0 {
                continue;
            }
            let base_phase = 2.0 * PI * f0 * (t + 0.5 * glide * t * t / dur);
            let s: f64 = partials
                .iter()
                .filter(|(h, _, _)| h * f0 * (1.0 + glide) < 0.45 * SAMPLE_RATE as f64)
                .map(|(h, a, p)| a * (h * base_phase + p).sin())
                .sum();
            *o += gate * s;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / SAMPLE_RATE as f64;
        *o *= envelope(family, t, dur, decay_rate);
        let z: f64 = StandardNormal.sample(rng);
        *o += spec.noise_floor * z;
    }
    let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let target = rng.gen_range(MIN_PEAK..MAX_PEAK);
    if peak > 0.0 {
        out.iter_mut().for_each(|x| *x *= target / peak);
    }
    out
}

fn segment_gate(t: f64, start: f64, end: f64, xfade: f64, first: bool, last: bool) -> f64 {
    let rise = if first {
        1.0
    } else {
        ((t - start + xfade) / (2.0 * xfade)).clamp(0.0, 1.0)
    };
    let fall = if last {
        1.0
    } else {
        ((end + xfade - t) / (2.0 * xfade)).clamp(0.0, 1.0)
    };
    rise.min(fall)
}

/// Writes `wav/clip_NNNNN.wav` files and `manifest.jsonl` under `out_dir`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let wav_dir = out_dir.join("wav");
    fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let mut entries = Vec::with_capacity(spec.num_clips);
    for i in 0..spec.num_clips {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let clip = synthesize_clip(spec, &mut rng);
        let rel = PathBuf::from("wav").join(format!("clip_{i:05}.wav"));
        write_waveform(out_dir.join(&rel), &clip)?;
        entries.push(ManifestEntry {
            clip_id: format!("clip_{i:05}"),
            waveform_path: rel,
            teacher_path: None,
            num_samples: clip.len(),
            sample_rate: SAMPLE_RATE,
        });
    }
    let manifest = DatasetManifest::new(out_dir, entries);
    manifest.write(out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
