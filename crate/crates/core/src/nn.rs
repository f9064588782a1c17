//! Minimal f64 layers with hand-written backward passes.
//!
//! Activations are channel-major `(C, L)` for convolutions and row-major
//! `(N, features)` for linear maps. Every `backward` accumulates parameter
//! gradients into a same-shaped gradient holder.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Flat parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        Param {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// PyTorch-style `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialisation.
    pub fn uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Param {
            shape: shape.to_vec(),
            data: (0..shape.iter().product::<usize>())
                .map(|_| rng.gen_range(-bound..bound))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn add_scaled(&mut self, other: &Param, scale: f64) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    fn as_matrix(&self, rows: usize, cols: usize) -> ndarray::ArrayView2<'_, f64> {
        ndarray::ArrayView2::from_shape((rows, cols), &self.data).expect("param shape")
    }

    fn as_matrix_mut(&mut self, rows: usize, cols: usize) -> ndarray::ArrayViewMut2<'_, f64> {
        ndarray::ArrayViewMut2::from_shape((rows, cols), &mut self.data).expect("param shape")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    0.1 * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.1
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, pre: &Array2<f64>) -> Array2<f64> {
        pre.mapv(|x| self.apply(x))
    }

    pub fn backward(self, pre: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
        let mut dx = dy.clone();
        dx.zip_mut_with(pre, |g, &x| *g *= self.derivative(x));
        dx
    }
}

/// Strided 1-D convolution without padding. Weight `(out, in, kernel)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = c_in * kernel;
        Conv1d {
            weight: Param::uniform(&[c_out, c_in, kernel], fan_in, rng),
            bias: Param::uniform(&[c_out], fan_in, rng),
            stride,
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len - self.kernel()) / self.stride + 1
    }

    fn im2col(&self, x: &Array2<f64>) -> Array2<f64> {
        let (c_in, k, s) = (self.c_in(), self.kernel(), self.stride);
        let l_out = self.out_len(x.ncols());
        let mut cols = Array2::zeros((l_out, c_in * k));
        for p in 0..l_out {
            let mut row = cols.row_mut(p);
            for c in 0..c_in {
                for kk in 0..k {
                    row[c * k + kk] = x[[c, p * s + kk]];
                }
            }
        }
        cols
    }

    /// `x`: `(C_in, L)`. Returns `(C_out, L_out)` and the im2col cache.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        assert_eq!(x.nrows(), self.c_in(), "conv input channels");
        let cols = self.im2col(x);
        let w = self.weight.as_matrix(self.c_out(), self.c_in() * self.kernel());
        let mut y = w.dot(&cols.t());
        let b = ndarray::ArrayView1::from(&self.bias.data);
        y += &b.insert_axis(Axis(1));
        (y, cols)
    }

    pub fn backward(&self, cols: &Array2<f64>, in_len: usize, dy: &Array2<f64>, grad: &mut Conv1d) -> Array2<f64> {
        let (c_in, k, s, c_out) = (self.c_in(), self.kernel(), self.stride, self.c_out());
        let gw = dy.dot(cols);
        grad.weight.as_matrix_mut(c_out, c_in * k).scaled_add(1.0, &gw);
        for (g, row) in grad.bias.data.iter_mut().zip(dy.axis_iter(Axis(0))) {
            *g += row.sum();
        }
        let w = self.weight.as_matrix(c_out, c_in * k);
        let dcols = dy.t().dot(&w);
        let mut dx = Array2::zeros((c_in, in_len));
        for p in 0..dcols.nrows() {
            let row = dcols.row(p);
            for c in 0..c_in {
                for kk in 0..k {
                    dx[[c, p * s + kk]] += row[c * k + kk];
                }
            }
        }
        dx
    }
}

/// Transposed 1-D convolution. Weight `(in, out, kernel)`; output length `(L - 1)·stride + kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose1d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
}

impl ConvTranspose1d {
    pub fn new(c_in: usize, c_out: usize, kernel: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = c_in * kernel / stride.max(1);
        ConvTranspose1d {
            weight: Param::uniform(&[c_in, c_out, kernel], fan_in.max(1), rng),
            bias: Param::uniform(&[c_out], fan_in.max(1), rng),
            stride,
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape[0]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape[2]
    }

    pub fn out_len(&self, len: usize) -> usize {
        (len - 1) * self.stride + self.kernel()
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.c_in(), "transposed conv input channels");
        let (c_out, k, s) = (self.c_out(), self.kernel(), self.stride);
        let w = self.weight.as_matrix(self.c_in(), c_out * k);
        let cols = x.t().dot(&w);
        let mut y = Array2::zeros((c_out, self.out_len(x.ncols())));
        for p in 0..cols.nrows() {
            let row = cols.row(p);
            for o in 0..c_out {
                for kk in 0..k {
                    y[[o, p * s + kk]] += row[o * k + kk];
                }
            }
        }
        for (o, mut r) in y.axis_iter_mut(Axis(0)).enumerate() {
            r += self.bias.data[o];
        }
        y
    }

    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut ConvTranspose1d) -> Array2<f64> {
        let (c_in, c_out, k, s) = (self.c_in(), self.c_out(), self.kernel(), self.stride);
        let l_in = x.ncols();
        let mut dcols = Array2::zeros((l_in, c_out * k));
        for p in 0..l_in {
            let mut row = dcols.row_mut(p);
            for o in 0..c_out {
                for kk in 0..k {
                    row[o * k + kk] = dy[[o, p * s + kk]];
                }
            }
        }
        grad.weight.as_matrix_mut(c_in, c_out * k).scaled_add(1.0, &x.dot(&dcols));
        for (g, row) in grad.bias.data.iter_mut().zip(dy.axis_iter(Axis(0))) {
            *g += row.sum();
        }
        self.weight.as_matrix(c_in, c_out * k).dot(&dcols.t())
    }
}

/// Affine map on rows. Weight `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    pub fn new(d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: Param::uniform(&[d_out, d_in], d_in, rng),
            bias: Param::uniform(&[d_out], d_in, rng),
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut weight = Param::zeros(&[d, d]);
        for i in 0..d {
            weight.data[i * d + i] = 1.0;
        }
        Linear {
            weight,
            bias: Param::zeros(&[d]),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.shape[1]
    }

    pub fn d_out(&self) -> usize {
        self.weight.shape[0]
    }

    /// `x`: `(N, in)` → `(N, out)`.
    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let w = self.weight.as_matrix(self.d_out(), self.d_in());
        let mut y = x.dot(&w.t());
        y += &Array1::from(self.bias.data.clone());
        y
    }

    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        let (o, i) = (self.d_out(), self.d_in());
        grad.weight.as_matrix_mut(o, i).scaled_add(1.0, &dy.t().dot(x));
        for (g, col) in grad.bias.data.iter_mut().zip(dy.axis_iter(Axis(1))) {
            *g += col.sum();
        }
        dy.dot(&self.weight.as_matrix(o, i))
    }
}

/// Adam with bias correction; the learning rate is supplied per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Param>,
    pub v: Vec<Param>,
}

impl Adam {
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|s| Param::zeros(s)).collect(),
            v: shapes.iter().map(|s| Param::zeros(s)).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>, grads: Vec<&Param>, lr: f64) {
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = self.beta1 * m.data[i] + (1.0 - self.beta1) * gi;
                v.data[i] = self.beta2 * v.data[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m.data[i] / bc1;
                let vh = v.data[i] / bc2;
                p.data[i] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}
