use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, TrainConfig, SEED_INIT};
use crate::error::{Error, Result};
use crate::featureio::{read_tensor, write_tensor, TensorFile};
use crate::nn::{Adam, Param};
use crate::vae::VaeModel;

/// Resumable training state.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Number of completed optimization steps.
    pub step: usize,
    pub model: VaeModel,
    pub optimizer: Adam,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    config_hash: String,
    step: usize,
    seed: u64,
    model_seed: u64,
    teacher_seed: u64,
    adam_t: u64,
    params: Vec<String>,
}

impl Checkpoint {
    /// Freshly initialized model and optimizer for `config`.
    pub fn init(config: &TrainConfig) -> Result<Self> {
        let model = VaeModel::new(&config.encoder, &config.projection, model_seed(config))?;
        let shapes: Vec<Vec<usize>> = model.params().iter().map(|(_, p)| p.shape.clone()).collect();
        Ok(Checkpoint {
            config: config.clone(),
            step: 0,
            optimizer: Adam::new(&shapes),
            model,
        })
    }
}

pub(crate) fn model_seed(config: &TrainConfig) -> u64 {
    derive_seed(config.seed, 0, SEED_INIT)
}

fn param_file(dir: &Path, prefix: &str, name: &str) -> std::path::PathBuf {
    dir.join(prefix).join(format!("{name}.ftf"))
}

fn to_tensor(p: &Param) -> TensorFile {
    TensorFile::from_f64(&p.shape, p.data.clone()).expect("param shape matches data")
}

/// Writes `config.json`, `metadata.json` and f64 tensors under `params/`, `adam_m/`, `adam_v/`.
pub fn save_checkpoint(ckpt: &Checkpoint, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["params", "adam_m", "adam_v"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let named = ckpt.model.params();
    for (i, (name, p)) in named.iter().enumerate() {
        write_tensor(param_file(dir, "params", name), &to_tensor(p))?;
        write_tensor(param_file(dir, "adam_m", name), &to_tensor(&ckpt.optimizer.m[i]))?;
        write_tensor(param_file(dir, "adam_v", name), &to_tensor(&ckpt.optimizer.v[i]))?;
    }
    let meta = Metadata {
        config_hash: ckpt.config.hash(),
        step: ckpt.step,
        seed: ckpt.config.seed,
        model_seed: model_seed(&ckpt.config),
        teacher_seed: ckpt.config.teacher.seed,
        adam_t: ckpt.optimizer.t,
        params: named.iter().map(|(n, _)| n.clone()).collect(),
    };
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(p, e))
    };
    write("config.json", ckpt.config.to_json())?;
    write("metadata.json", serde_json::to_string_pretty(&meta)?)
}

fn load_param(path: &Path, expect: &Param) -> Result<Param> {
    let t = read_tensor(path)?;
    if t.dims() != expect.shape {
        return Err(Error::Checkpoint(format!(
            "{}: shape {:?}, model expects {:?}",
            path.display(),
            t.dims(),
            expect.shape
        )));
    }
    Ok(Param {
        shape: expect.shape.clone(),
        data: t.to_f64(),
    })
}

/// Loads a checkpoint, refusing it when the stored config hash does not match the config.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<Checkpoint> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(p, e))
    };
    let config = TrainConfig::from_json(&read("config.json")?)?;
    let meta: Metadata = serde_json::from_str(&read("metadata.json")?)?;
    if meta.config_hash != config.hash() {
        return Err(Error::Checkpoint(format!(
            "config hash mismatch: metadata {} vs config {}",
            meta.config_hash,
            config.hash()
        )));
    }
    let mut ckpt = Checkpoint::init(&config)?;
    let names: Vec<String> = ckpt.model.params().into_iter().map(|(n, _)| n).collect();
    if names != meta.params {
        return Err(Error::Checkpoint("parameter list does not match the model".into()));
    }
    let mut loaded = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let expect = &ckpt.optimizer.m[i];
        loaded.push((
            load_param(&param_file(dir, "params", name), expect)?,
            load_param(&param_file(dir, "adam_m", name), expect)?,
            load_param(&param_file(dir, "adam_v", name), expect)?,
        ));
    }
    for ((p, (w, m, v)), i) in ckpt.model.params_mut().into_iter().zip(loaded).zip(0..) {
        *p = w;
        ckpt.optimizer.m[i] = m;
        ckpt.optimizer.v[i] = v;
    }
    ckpt.optimizer.t = meta.adam_t;
    ckpt.step = meta.step;
    Ok(ckpt)
}
