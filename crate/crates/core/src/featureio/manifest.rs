use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::tensor::read_tensor;
use super::wav::{wav_num_samples, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub waveform_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_path: Option<PathBuf>,
    pub num_samples: usize,
    pub sample_rate: u32,
}

/// Clip list plus the directory that relative paths are resolved against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, entries: Vec<ManifestEntry>) -> Self {
        DatasetManifest {
            root: root.into(),
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn waveform_path(&self, idx: usize) -> PathBuf {
        self.resolve(&self.entries[idx].waveform_path)
    }

    pub fn teacher_path(&self, idx: usize) -> Option<PathBuf> {
        self.entries[idx].teacher_path.as_deref().map(|p| self.resolve(p))
    }

    /// Reads a JSON-lines manifest; relative paths resolve against its directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: ManifestEntry = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            entries.push(entry);
        }
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(DatasetManifest { root, entries })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, e)?;
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    /// Checks id uniqueness, sample rate, file presence and lengths.
    ///
    /// `hop` and `teacher_rate` give the expected teacher frame count for
    /// entries carrying features: `ceil(num_samples / hop)` at the latent rate,
    /// otherwise the count implied by `teacher_rate` (±1 frame).
    pub fn validate(&self, hop: usize, teacher_rate: f64) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Manifest("manifest has no entries".into()));
        }
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate clip_id {:?}", e.clip_id)));
            }
            if e.sample_rate != SAMPLE_RATE {
                return Err(Error::Manifest(format!(
                    "clip {:?} has sample_rate {}, expected {SAMPLE_RATE}",
                    e.clip_id, e.sample_rate
                )));
            }
            let wav = self.waveform_path(i);
            let n = wav_num_samples(&wav)?;
            if n != e.num_samples {
                return Err(Error::Manifest(format!(
                    "clip {:?}: manifest says {} samples, file has {n}",
                    e.clip_id, e.num_samples
                )));
            }
            if let Some(tp) = self.teacher_path(i) {
                let t = read_tensor(&tp)?;
                let frames = t.dims()[0];
                let latent_frames = e.num_samples.div_ceil(hop);
                let latent_rate = SAMPLE_RATE as f64 / hop as f64;
                let ok = if (teacher_rate - latent_rate).abs() < 1e-9 {
                    frames == latent_frames
                } else {
                    let expected = e.num_samples as f64 * teacher_rate / SAMPLE_RATE as f64;
                    (frames as f64 - expected).abs() <= 1.0 + 1e-9
                };
                if !ok {
                    return Err(Error::Manifest(format!(
                        "clip {:?}: teacher file has {frames} frames, inconsistent with {} samples",
                        e.clip_id, e.num_samples
                    )));
                }
            }
        }
        Ok(())
    }
}
