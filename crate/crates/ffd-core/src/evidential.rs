//! Dirichlet evidence core.
//!
//! A classifier head emits one non-negative evidence value per class. Treating
//! `alpha_k = e_k + 1` as Dirichlet concentration parameters gives, for `K`
//! classes with total strength `S = sum_k (e_k + 1)`:
//!
//! | quantity        | definition        |
//! |-----------------|-------------------|
//! | belief_k        | `(e_k + 1) / S`   |
//! | uncertainty `u` | `K / S`           |
//! | confidence `p`  | `max_k belief_k`  |
//!
//! Zero evidence everywhere yields the maximally uncertain summary
//! (`u = 1`, uniform belief); evidence in one class drives `u` toward 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw head outputs are clamped to this magnitude before `exp` so the
/// evidence stays finite.
pub const LOGIT_CLAMP: f64 = 10.0;

/// Map from unconstrained head outputs to non-negative evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `exp(clamp(x, -10, 10))` — the default.
    #[default]
    ClampedExp,
    /// `max(x, 0)`.
    Relu,
    /// `ln(1 + exp(x))`.
    Softplus,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::ClampedExp => x.clamp(-LOGIT_CLAMP, LOGIT_CLAMP).exp(),
            Activation::Relu => x.max(0.0),
            Activation::Softplus => {
                // Stable softplus: ln(1 + e^x) = max(x, 0) + ln(1 + e^-|x|).
                x.max(0.0) + (-x.abs()).exp().ln_1p()
            }
        }
    }
}

/// Validated per-class evidence (finite, non-negative, at least two classes).
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceVector(Vec<f64>);

impl EvidenceVector {
    pub fn new(e: Vec<f64>) -> Result<Self> {
        if e.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "evidence needs at least 2 classes, got {}",
                e.len()
            )));
        }
        if let Some(bad) = e.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "evidence must be finite and non-negative, got {bad}"
            )));
        }
        Ok(Self(e))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }
}

/// Apply `activation` to raw head outputs and validate the result.
pub fn evidence_from_logits(logits: &[f64], activation: Activation) -> Result<EvidenceVector> {
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "non-finite head output {bad}"
        )));
    }
    EvidenceVector::new(logits.iter().map(|&x| activation.apply(x)).collect())
}

/// Belief mass, uncertainty, and the predicted class for one evidence vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletSummary {
    /// Total strength `S = sum_k (e_k + 1)`.
    pub strength: f64,
    /// `u = K / S`, in `(0, 1]`.
    pub uncertainty: f64,
    /// Per-class belief `(e_k + 1) / S`; sums to 1.
    pub belief: Vec<f64>,
    /// Arg-max of belief; ties go to the lower class index.
    pub predicted_class: usize,
    /// `p = max_k belief_k`.
    pub max_belief: f64,
}

/// Summarize an evidence vector as Dirichlet belief and uncertainty mass.
pub fn dirichlet_summary(evidence: &EvidenceVector) -> DirichletSummary {
    let e = evidence.values();
    let k = e.len() as f64;
    let strength: f64 = e.iter().map(|v| v + 1.0).sum();
    let belief: Vec<f64> = e.iter().map(|v| (v + 1.0) / strength).collect();
    let mut predicted_class = 0;
    for (i, b) in belief.iter().enumerate() {
        if *b > belief[predicted_class] {
            predicted_class = i;
        }
    }
    DirichletSummary {
        strength,
        uncertainty: k / strength,
        max_belief: belief[predicted_class],
        predicted_class,
        belief,
    }
}

/// Validate raw evidence values and summarize them in one call.
pub fn summarize(evidence: &[f64]) -> Result<DirichletSummary> {
    Ok(dirichlet_summary(&EvidenceVector::new(evidence.to_vec())?))
}
