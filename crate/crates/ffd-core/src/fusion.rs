//! Uncertainty-weighted feature fusion.
//!
//! The two branches contribute their feature vectors in proportion to how
//! certain each one is: weights are a softmax over negated uncertainties, so
//! the less uncertain branch dominates — but never completely. Because
//! uncertainties live in `[0, 1]`, their difference lives in `[-1, 1]` and
//! each weight stays inside `[1/(1+e), e/(1+e)]`, roughly `[0.269, 0.731]`;
//! neither branch can be silenced.

use crate::error::{Error, Result};

/// Convex weights for the main and auxiliary branch features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub main: f64,
    pub aux: f64,
}

/// A fused feature vector along with the weights that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature {
    pub feature: Vec<f64>,
    pub weights: FusionWeights,
}

/// `softmax(-u_main, -u_aux)` — lower uncertainty earns the larger weight.
pub fn fusion_weights(u_main: f64, u_aux: f64) -> Result<FusionWeights> {
    for u in [u_main, u_aux] {
        if !u.is_finite() || !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidInput(format!(
                "uncertainty out of range: {u}"
            )));
        }
    }
    // Two-way softmax reduces to a sigmoid of the difference.
    let main = 1.0 / (1.0 + (u_main - u_aux).exp());
    Ok(FusionWeights {
        main,
        aux: 1.0 - main,
    })
}

/// Blend the branch features: `w_main * f_main + w_aux * f_aux`.
pub fn fuse(f_main: &[f64], f_aux: &[f64], u_main: f64, u_aux: f64) -> Result<FusedFeature> {
    if f_main.len() != f_aux.len() {
        return Err(Error::InvalidInput(format!(
            "feature length mismatch: {} vs {}",
            f_main.len(),
            f_aux.len()
        )));
    }
    let weights = fusion_weights(u_main, u_aux)?;
    let feature = f_main
        .iter()
        .zip(f_aux)
        .map(|(m, a)| weights.main * m + weights.aux * a)
        .collect();
    Ok(FusedFeature { feature, weights })
}
