use ndarray::{s, Array2, Array3, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{EncoderConfig, ProjectionConfig};
use crate::error::{Error, Result};
use crate::losses::FeatureBatch;
use crate::nn::{Activation, Conv1d, ConvTranspose1d, Linear, Param};

pub const LOGVAR_MIN: f64 = -30.0;
pub const LOGVAR_MAX: f64 = 20.0;

/// Diagonal Gaussian posterior over the latent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosterior {
    pub mu: Array3<f64>,
    pub logvar: Array3<f64>,
    pub mask: Array2<bool>,
}

impl LatentPosterior {
    pub fn new(mu: Array3<f64>, logvar: Array3<f64>, mask: Array2<bool>) -> Result<Self> {
        let (b, t, _) = mu.dim();
        if mu.dim() != logvar.dim() || mask.dim() != (b, t) {
            return Err(Error::ShapeMismatch(format!(
                "posterior mu {:?}, logvar {:?}, mask {:?}",
                mu.dim(),
                logvar.dim(),
                mask.dim()
            )));
        }
        let logvar = logvar.mapv(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        Ok(LatentPosterior { mu, logvar, mask })
    }

    pub fn frames(&self) -> usize {
        self.mu.dim().1
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.dim().2
    }
}

/// `z = mu + exp(logvar / 2) · ε`, with ε drawn in `(b, t, d)` order from `noise_seed`.
pub fn reparameterize(post: &LatentPosterior, noise_seed: u64) -> Array3<f64> {
    let eps = standard_normal(post.mu.dim(), noise_seed);
    reparameterize_with(post, &eps)
}

pub(crate) fn standard_normal(dim: (usize, usize, usize), seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_simple_fn(dim, || StandardNormal.sample(&mut rng))
}

pub(crate) fn reparameterize_with(post: &LatentPosterior, eps: &Array3<f64>) -> Array3<f64> {
    let mut z = post.mu.clone();
    ndarray::Zip::from(&mut z)
        .and(&post.logvar)
        .and(eps)
        .for_each(|z, &lv, &e| *z += (0.5 * lv).exp() * e);
    z
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub stages: Vec<Conv1d>,
    /// 1×1 convolution producing `[mu; logvar]`.
    pub head: Conv1d,
    pub activation: Activation,
    pub latent_dim: usize,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    stage_cols: Vec<Array2<f64>>,
    stage_in_len: Vec<usize>,
    stage_pre: Vec<Array2<f64>>,
    head_cols: Array2<f64>,
    head_in_len: usize,
    logvar_raw: Array2<f64>,
}

impl Encoder {
    pub fn new(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut c_in = 1;
        let mut stages = Vec::new();
        for (&f, c_out) in cfg.downsample_factors.iter().zip(cfg.stage_channels()) {
            stages.push(Conv1d::new(c_in, c_out, f, f, rng));
            c_in = c_out;
        }
        Encoder {
            stages,
            head: Conv1d::new(c_in, 2 * cfg.latent_dim, 1, 1, rng),
            activation: cfg.activation,
            latent_dim: cfg.latent_dim,
        }
    }

    /// One padded waveform → `(mu, clamped logvar)`, each `(T, latent_dim)`.
    pub fn forward(&self, wave: &[f64]) -> (Array2<f64>, Array2<f64>, EncoderCache) {
        let mut h = Array2::from_shape_vec((1, wave.len()), wave.to_vec()).expect("wave shape");
        let mut cache = EncoderCache {
            stage_cols: Vec::with_capacity(self.stages.len()),
            stage_in_len: Vec::with_capacity(self.stages.len()),
            stage_pre: Vec::with_capacity(self.stages.len()),
            head_cols: Array2::zeros((0, 0)),
            head_in_len: 0,
            logvar_raw: Array2::zeros((0, 0)),
        };
        for conv in &self.stages {
            let (pre, cols) = conv.forward(&h);
            cache.stage_in_len.push(h.ncols());
            h = self.activation.forward(&pre);
            cache.stage_cols.push(cols);
            cache.stage_pre.push(pre);
        }
        cache.head_in_len = h.ncols();
        let (out, cols) = self.head.forward(&h);
        cache.head_cols = cols;
        let d = self.latent_dim;
        let mu = out.slice(s![..d, ..]).t().to_owned();
        let logvar_raw = out.slice(s![d.., ..]).t().to_owned();
        let logvar = logvar_raw.mapv(|v| v.clamp(LOGVAR_MIN, LOGVAR_MAX));
        cache.logvar_raw = logvar_raw;
        (mu, logvar, cache)
    }

    fn head_upstream(&self, cache: &EncoderCache, dmu: &Array2<f64>, dlogvar: &Array2<f64>) -> Array2<f64> {
        let d = self.latent_dim;
        let t = dmu.nrows();
        let mut dout = Array2::zeros((2 * d, t));
        dout.slice_mut(s![..d, ..]).assign(&dmu.t());
        let mut dlv = dlogvar.t().to_owned();
        dlv.zip_mut_with(&cache.logvar_raw.t(), |g, &raw| {
            if !(LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) {
                *g = 0.0;
            }
        });
        dout.slice_mut(s![d.., ..]).assign(&dlv);
        dout
    }

    /// Head-parameter gradient only, for gradient-norm measurements.
    pub fn head_grad(&self, cache: &EncoderCache, dmu: &Array2<f64>, dlogvar: &Array2<f64>, grad: &mut Conv1d) {
        let dout = self.head_upstream(cache, dmu, dlogvar);
        self.head.backward(&cache.head_cols, cache.head_in_len, &dout, grad);
    }

    pub fn backward(&self, cache: &EncoderCache, dmu: &Array2<f64>, dlogvar: &Array2<f64>, grad: &mut Encoder) {
        let dout = self.head_upstream(cache, dmu, dlogvar);
        let mut dh = self
            .head
            .backward(&cache.head_cols, cache.head_in_len, &dout, &mut grad.head);
        for i in (0..self.stages.len()).rev() {
            let dpre = self.activation.backward(&cache.stage_pre[i], &dh);
            dh = self.stages[i].backward(&cache.stage_cols[i], cache.stage_in_len[i], &dpre, &mut grad.stages[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    /// 1×1 convolution from the latent to the deepest channel count.
    pub head: Conv1d,
    pub stages: Vec<ConvTranspose1d>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    head_cols: Array2<f64>,
    head_in_len: usize,
    head_pre: Array2<f64>,
    stage_in: Vec<Array2<f64>>,
    stage_pre: Vec<Array2<f64>>,
}

impl Decoder {
    pub fn new(cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Self {
        let channels = cfg.stage_channels();
        let deepest = *channels.last().expect("validated non-empty");
        let head = Conv1d::new(cfg.latent_dim, deepest, 1, 1, rng);
        let mut stages = Vec::new();
        for i in (0..channels.len()).rev() {
            let c_in = channels[i];
            let c_out = if i == 0 { 1 } else { channels[i - 1] };
            let f = cfg.downsample_factors[i];
            stages.push(ConvTranspose1d::new(c_in, c_out, f, f, rng));
        }
        Decoder {
            head,
            stages,
            activation: cfg.activation,
        }
    }

    /// `(T, latent_dim)` → `T · hop` samples.
    pub fn forward(&self, z: &Array2<f64>) -> (Vec<f64>, DecoderCache) {
        let x = z.t().to_owned();
        let (pre, cols) = self.head.forward(&x);
        let mut h = self.activation.forward(&pre);
        let mut cache = DecoderCache {
            head_cols: cols,
            head_in_len: x.ncols(),
            head_pre: pre,
            stage_in: Vec::with_capacity(self.stages.len()),
            stage_pre: Vec::with_capacity(self.stages.len()),
        };
        let last = self.stages.len() - 1;
        for (i, st) in self.stages.iter().enumerate() {
            let pre = st.forward(&h);
            cache.stage_in.push(h);
            h = if i == last { pre.clone() } else { self.activation.forward(&pre) };
            cache.stage_pre.push(pre);
        }
        (h.into_raw_vec_and_offset().0, cache)
    }

    /// Returns `∂/∂z` as `(T, latent_dim)`.
    pub fn backward(&self, cache: &DecoderCache, dwave: &[f64], grad: &mut Decoder) -> Array2<f64> {
        let last = self.stages.len() - 1;
        let mut dh = Array2::from_shape_vec((1, dwave.len()), dwave.to_vec()).expect("dwave shape");
        for i in (0..self.stages.len()).rev() {
            let dpre = if i == last {
                dh
            } else {
                self.activation.backward(&cache.stage_pre[i], &dh)
            };
            dh = self.stages[i].backward(&cache.stage_in[i], &dpre, &mut grad.stages[i]);
        }
        let dpre = self.activation.backward(&cache.head_pre, &dh);
        let dx = self
            .head
            .backward(&cache.head_cols, cache.head_in_len, &dpre, &mut grad.head);
        dx.t().to_owned()
    }
}

/// Map from the latent to the teacher dimension: one affine layer, or an MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub layers: Vec<Linear>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ProjectionCache {
    inputs: Vec<Array2<f64>>,
    pres: Vec<Array2<f64>>,
}

impl Projection {
    pub fn new(latent_dim: usize, cfg: &ProjectionConfig, activation: Activation, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![latent_dim];
        dims.extend(std::iter::repeat_n(cfg.hidden_dim, cfg.hidden_layers));
        dims.push(cfg.out_dim);
        Projection {
            layers: dims.windows(2).map(|w| Linear::new(w[0], w[1], rng)).collect(),
            activation,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Projection {
            layers: vec![Linear::identity(dim)],
            activation: Activation::Identity,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").d_out()
    }

    /// Rows `(N, in)` → `(N, out)`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, ProjectionCache) {
        let mut cache = ProjectionCache {
            inputs: Vec::new(),
            pres: Vec::new(),
        };
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let pre = l.forward(&h);
            cache.inputs.push(h);
            h = if i == last { pre.clone() } else { self.activation.forward(&pre) };
            cache.pres.push(pre);
        }
        (h, cache)
    }

    pub fn backward(&self, cache: &ProjectionCache, dy: &Array2<f64>, grad: &mut Projection) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut dh = dy.clone();
        for i in (0..self.layers.len()).rev() {
            let dpre = if i == last {
                dh
            } else {
                self.activation.backward(&cache.pres[i], &dh)
            };
            dh = self.layers[i].backward(&cache.inputs[i], &dpre, &mut grad.layers[i]);
        }
        dh
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }
}

/// Number of fully covered latent frames for a clip of `len` samples.
pub fn valid_frames(len: usize, hop: usize) -> usize {
    len / hop
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder_config: EncoderConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub projection: Projection,
}

impl VaeModel {
    pub fn new(enc: &EncoderConfig, proj: &ProjectionConfig, seed: u64) -> Result<Self> {
        enc.validate()?;
        if proj.out_dim == 0 || (proj.hidden_layers > 0 && proj.hidden_dim == 0) {
            return Err(Error::Config("projection dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(enc, &mut rng);
        let decoder = Decoder::new(enc, &mut rng);
        let projection = Projection::new(enc.latent_dim, proj, enc.activation, &mut rng);
        Ok(VaeModel {
            encoder_config: enc.clone(),
            encoder,
            decoder,
            projection,
        })
    }

    pub fn hop(&self) -> usize {
        self.encoder_config.hop()
    }

    /// Gradient holder with identical structure and zeroed values.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.params_mut().into_iter().for_each(|p| p.fill(0.0));
        z
    }

    pub fn params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, c) in self.encoder.stages.iter().enumerate() {
            out.push((format!("encoder.stages.{i}.weight"), &c.weight));
            out.push((format!("encoder.stages.{i}.bias"), &c.bias));
        }
        out.push(("encoder.head.weight".into(), &self.encoder.head.weight));
        out.push(("encoder.head.bias".into(), &self.encoder.head.bias));
        out.push(("decoder.head.weight".into(), &self.decoder.head.weight));
        out.push(("decoder.head.bias".into(), &self.decoder.head.bias));
        for (i, c) in self.decoder.stages.iter().enumerate() {
            out.push((format!("decoder.stages.{i}.weight"), &c.weight));
            out.push((format!("decoder.stages.{i}.bias"), &c.bias));
        }
        for (i, l) in self.projection.layers.iter().enumerate() {
            out.push((format!("projection.layers.{i}.weight"), &l.weight));
            out.push((format!("projection.layers.{i}.bias"), &l.bias));
        }
        out
    }

    /// Same order as [`VaeModel::params`].
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = Vec::new();
        for c in &mut self.encoder.stages {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.encoder.head.weight);
        out.push(&mut self.encoder.head.bias);
        out.push(&mut self.decoder.head.weight);
        out.push(&mut self.decoder.head.bias);
        for c in &mut self.decoder.stages {
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        for l in &mut self.projection.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    /// Right-pads each clip to a whole number of frames.
    pub fn pad_clip(&self, clip: &[f64]) -> Result<Vec<f64>> {
        let hop = self.hop();
        if clip.len() < hop {
            return Err(Error::InputTooShort { samples: clip.len(), hop });
        }
        let mut v = clip.to_vec();
        v.resize(clip.len().div_ceil(hop) * hop, 0.0);
        Ok(v)
    }

    /// Encodes a `(B, S)` batch of equal-length waveforms.
    pub fn encode(&self, waves: &Array2<f64>) -> Result<LatentPosterior> {
        let clips: Vec<Vec<f64>> = waves.rows().into_iter().map(|r| r.to_vec()).collect();
        let refs: Vec<&[f64]> = clips.iter().map(Vec::as_slice).collect();
        self.encode_clips(&refs)
    }

    /// Encodes clips of possibly different lengths; shorter clips are padded and their
    /// trailing frames masked. Frames not fully covered by real samples are masked.
    pub fn encode_clips(&self, clips: &[&[f64]]) -> Result<LatentPosterior> {
        let hop = self.hop();
        let d = self.encoder_config.latent_dim;
        let max_len = clips.iter().map(|c| c.len()).max().unwrap_or(0);
        if clips.is_empty() || clips.iter().any(|c| c.len() < hop) {
            let shortest = clips.iter().map(|c| c.len()).min().unwrap_or(0);
            return Err(Error::InputTooShort { samples: shortest, hop });
        }
        let t = max_len.div_ceil(hop);
        let mut mu = Array3::zeros((clips.len(), t, d));
        let mut logvar = Array3::zeros((clips.len(), t, d));
        let mut mask = Array2::from_elem((clips.len(), t), false);
        for (b, clip) in clips.iter().enumerate() {
            let mut padded = clip.to_vec();
            padded.resize(t * hop, 0.0);
            let (m, lv, _) = self.encoder.forward(&padded);
            mu.slice_mut(s![b, .., ..]).assign(&m);
            logvar.slice_mut(s![b, .., ..]).assign(&lv);
            mask.slice_mut(s![b, ..valid_frames(clip.len(), hop)]).fill(true);
        }
        LatentPosterior::new(mu, logvar, mask)
    }

    /// `(B, T, latent_dim)` → `(B, T · hop)`.
    pub fn decode(&self, z: &Array3<f64>) -> Result<Array2<f64>> {
        let (b, t, d) = z.dim();
        if d != self.encoder_config.latent_dim {
            return Err(Error::ShapeMismatch(format!("latent dim {d}, model expects {}", self.encoder_config.latent_dim)));
        }
        let mut out = Array2::zeros((b, t * self.hop()));
        for (i, zb) in z.axis_iter(Axis(0)).enumerate() {
            let (wave, _) = self.decoder.forward(&zb.to_owned());
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&wave));
        }
        Ok(out)
    }

    /// `(B, T, latent_dim)` → `(B, T, out_dim)`; masked frames are zeroed.
    pub fn project(&self, z: &Array3<f64>, mask: &Array2<bool>) -> Result<FeatureBatch> {
        let (b, t, d) = z.dim();
        if d != self.projection.in_dim() {
            return Err(Error::ShapeMismatch(format!("projection expects {} inputs, got {d}", self.projection.in_dim())));
        }
        let rows = z.to_shape((b * t, d)).expect("contiguous").to_owned();
        let (y, _) = self.projection.forward(&rows);
        let mut out = y
            .into_shape_with_order((b, t, self.projection.out_dim()))
            .expect("projection output shape");
        for ((bi, ti), &m) in mask.indexed_iter() {
            if !m {
                out.slice_mut(s![bi, ti, ..]).fill(0.0);
            }
        }
        FeatureBatch::new(out, mask.clone())
    }
}
