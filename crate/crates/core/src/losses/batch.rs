use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Batched `(B, T, D)` features with a `(B, T)` validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBatch {
    values: Array3<f64>,
    mask: Array2<bool>,
}

impl FeatureBatch {
    pub fn new(values: Array3<f64>, mask: Array2<bool>) -> Result<Self> {
        let (b, t, d) = values.dim();
        if b == 0 || t == 0 || d == 0 {
            return Err(Error::ShapeMismatch(format!("empty feature batch ({b}, {t}, {d})")));
        }
        if mask.dim() != (b, t) {
            return Err(Error::ShapeMismatch(format!(
                "mask {:?} does not match values ({b}, {t}, {d})",
                mask.dim()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::ShapeMismatch("feature batch has no valid frames".into()));
        }
        Ok(FeatureBatch { values, mask })
    }

    /// All frames valid.
    pub fn full(values: Array3<f64>) -> Result<Self> {
        let (b, t, _) = values.dim();
        Self::new(values, Array2::from_elem((b, t), true))
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.values.dim()
    }

    pub fn n_valid(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Same mask, new values.
    pub fn with_values(&self, values: Array3<f64>) -> Result<Self> {
        Self::new(values, self.mask.clone())
    }

    pub fn into_parts(self) -> (Array3<f64>, Array2<bool>) {
        (self.values, self.mask)
    }

    /// `(b, t)` coordinates of valid frames in batch-major order.
    pub fn valid_frames(&self) -> Vec<(usize, usize)> {
        self.mask
            .indexed_iter()
            .filter(|(_, &m)| m)
            .map(|(idx, _)| idx)
            .collect()
    }

    pub(crate) fn check_pair(&self, other: &FeatureBatch) -> Result<()> {
        if self.values.dim() != other.values.dim() {
            return Err(Error::ShapeMismatch(format!(
                "feature shapes differ: {:?} vs {:?}",
                self.values.dim(),
                other.values.dim()
            )));
        }
        if self.mask != other.mask {
            return Err(Error::ShapeMismatch("feature masks differ".into()));
        }
        Ok(())
    }
}

/// Hinge margins of the joint-marginal losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub m1: f64,
    pub m2: f64,
}

impl Margins {
    pub fn new(m1: f64, m2: f64) -> Result<Self> {
        let m = Margins { m1, m2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m1", self.m1), ("m2", self.m2)] {
            if !(0.0..=2.0).contains(&v) {
                return Err(Error::Config(format!("margin {name} = {v} outside [0, 2]")));
            }
        }
        Ok(())
    }
}
