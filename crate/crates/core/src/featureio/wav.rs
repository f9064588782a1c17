//! 16 kHz mono PCM16 WAV reading and writing.

use std::path::Path;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

fn unsupported(path: &Path, reason: impl Into<String>) -> Error {
    Error::UnsupportedAudio {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn hound_err(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => unsupported(path, other.to_string()),
    }
}

fn check_spec(path: &Path, spec: &hound::WavSpec) -> Result<()> {
    if spec.channels != 1 {
        return Err(unsupported(path, format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(unsupported(
            path,
            format!("{:?} {}-bit samples, expected PCM16", spec.sample_format, spec.bits_per_sample),
        ));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(unsupported(path, format!("sample rate {} Hz, expected {SAMPLE_RATE}", spec.sample_rate)));
    }
    Ok(())
}

/// Reads a PCM16 mono 16 kHz file, scaling samples by 1/32768.
pub fn load_waveform(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    check_spec(path, &spec)?;
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| hound_err(path, e))?;
    Ok(Waveform {
        samples,
        sample_rate: spec.sample_rate,
    })
}

/// Number of samples declared in the header, without decoding the payload.
pub fn wav_num_samples(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| hound_err(path, e))?;
    check_spec(path, &reader.spec())?;
    Ok(reader.duration() as usize)
}

pub fn quantize_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_waveform(path: impl AsRef<Path>, samples: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    for &s in samples {
        writer.write_sample(quantize_pcm16(s)).map_err(|e| hound_err(path, e))?;
    }
    writer.finalize().map_err(|e| hound_err(path, e))
}
