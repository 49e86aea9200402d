//! Importance weights for the weighted logistic loss.
//!
//! Known pairs count as `c_ij` positive training examples, unknown pairs as
//! a single negative example, and the diagonal carries weight zero. The
//! weight matrix is never materialized; `WeightView` answers `w_ij` from the
//! sparse positive set with 1 as the implicit default.

use crate::data::InteractionStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    /// `c_ij = c`, ignoring confidences.
    Uniform,
    /// `c_ij = 1 + c * eps_ij`.
    Linear,
    /// `c_ij = 1 + c * ln(1 + eps_ij)`.
    Loglinear,
}

/// One of the three importance-weight families plus its scale `c > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightScheme {
    kind: WeightKind,
    c: f64,
}

impl WeightScheme {
    pub fn new(kind: WeightKind, c: f64) -> Result<Self> {
        if !c.is_finite() || c <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "weight scale c must be positive and finite, got {c}"
            )));
        }
        Ok(Self { kind, c })
    }

    pub fn uniform(c: f64) -> Result<Self> {
        Self::new(WeightKind::Uniform, c)
    }

    pub fn linear(c: f64) -> Result<Self> {
        Self::new(WeightKind::Linear, c)
    }

    pub fn loglinear(c: f64) -> Result<Self> {
        Self::new(WeightKind::Loglinear, c)
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// `c_ij` for a known pair with confidence `eps`.
    pub fn positive_weight(&self, eps: f64) -> f64 {
        match self.kind {
            WeightKind::Uniform => self.c,
            WeightKind::Linear => 1.0 + self.c * eps,
            WeightKind::Loglinear => 1.0 + self.c * (1.0 + eps).ln(),
        }
    }
}

impl std::fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.kind {
            WeightKind::Uniform => "uniform",
            WeightKind::Linear => "linear",
            WeightKind::Loglinear => "loglinear",
        };
        write!(f, "{kind}(c={})", self.c)
    }
}

/// Read-only view answering `w_ij` for any pair of ids.
#[derive(Debug, Clone, Copy)]
pub struct WeightView<'a> {
    store: &'a InteractionStore,
    scheme: WeightScheme,
}

impl<'a> WeightView<'a> {
    pub fn new(store: &'a InteractionStore, scheme: WeightScheme) -> Self {
        Self { store, scheme }
    }

    pub fn store(&self) -> &'a InteractionStore {
        self.store
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    /// `w_ij`: 0 on the diagonal, `c_ij` for known pairs, 1 otherwise.
    pub fn weight(&self, i: u32, j: u32) -> f64 {
        if i == j {
            return 0.0;
        }
        match self.store.confidence(i, j) {
            Some(eps) => self.scheme.positive_weight(eps),
            None => 1.0,
        }
    }
}
