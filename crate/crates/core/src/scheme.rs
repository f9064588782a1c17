//! Distillation schemes behind a common trait, looked up by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::losses::{self, FeatureBatch, LossValue, Margins};

/// Per-call settings shared by all schemes.
#[derive(Debug, Clone, Copy)]
pub struct SchemeContext {
    pub margins: Option<Margins>,
    pub max_pairs_frames: usize,
}

pub trait DistillScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// Names of the loss terms, in the order returned by [`DistillScheme::losses`].
    fn components(&self) -> &'static [&'static str];

    fn requires_margins(&self) -> bool {
        false
    }

    fn losses(&self, zp: &FeatureBatch, f: &FeatureBatch, ctx: &SchemeContext) -> Result<Vec<LossValue>>;
}

/// Reconstruction and KL only.
pub struct Vanilla;

impl DistillScheme for Vanilla {
    fn name(&self) -> &'static str {
        "vanilla"
    }
    fn components(&self) -> &'static [&'static str] {
        &[]
    }
    fn losses(&self, _: &FeatureBatch, _: &FeatureBatch, _: &SchemeContext) -> Result<Vec<LossValue>> {
        Ok(Vec::new())
    }
}

/// Frame-wise cosine alignment.
pub struct TimeAxis;

impl DistillScheme for TimeAxis {
    fn name(&self) -> &'static str {
        "tas"
    }
    fn components(&self) -> &'static [&'static str] {
        &["t"]
    }
    fn losses(&self, zp: &FeatureBatch, f: &FeatureBatch, _: &SchemeContext) -> Result<Vec<LossValue>> {
        Ok(vec![losses::loss_t(zp, f)?])
    }
}

/// Dimension-wise cosine alignment.
pub struct DimensionAxis;

impl DistillScheme for DimensionAxis {
    fn name(&self) -> &'static str {
        "das"
    }
    fn components(&self) -> &'static [&'static str] {
        &["d"]
    }
    fn losses(&self, zp: &FeatureBatch, f: &FeatureBatch, _: &SchemeContext) -> Result<Vec<LossValue>> {
        Ok(vec![losses::loss_d(zp, f)?])
    }
}

/// Hinged frame cosine plus hinged pairwise-structure matching.
pub struct JointMarginal;

impl DistillScheme for JointMarginal {
    fn name(&self) -> &'static str {
        "jmas"
    }
    fn components(&self) -> &'static [&'static str] {
        &["mcos", "mdss"]
    }
    fn requires_margins(&self) -> bool {
        true
    }
    fn losses(&self, zp: &FeatureBatch, f: &FeatureBatch, ctx: &SchemeContext) -> Result<Vec<LossValue>> {
        let m = ctx
            .margins
            .ok_or_else(|| Error::Config("jmas requires margins".into()))?;
        Ok(vec![
            losses::loss_mcos(zp, f, m.m1)?,
            losses::loss_mdss(zp, f, m.m2, ctx.max_pairs_frames)?,
        ])
    }
}

#[derive(Clone)]
pub struct SchemeRegistry {
    schemes: BTreeMap<&'static str, Arc<dyn DistillScheme>>,
}

impl SchemeRegistry {
    pub fn empty() -> Self {
        SchemeRegistry {
            schemes: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Vanilla));
        r.register(Arc::new(TimeAxis));
        r.register(Arc::new(DimensionAxis));
        r.register(Arc::new(JointMarginal));
        r
    }

    /// Replaces any scheme already registered under the same name.
    pub fn register(&mut self, scheme: Arc<dyn DistillScheme>) {
        self.schemes.insert(scheme.name(), scheme);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn DistillScheme>> {
        self.schemes.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown scheme {name:?} (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.schemes.keys().copied().collect()
    }
}

impl Default for SchemeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
