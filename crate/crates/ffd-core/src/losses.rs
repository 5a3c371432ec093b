//! Training objectives, in plain scalar form.
//!
//! The trainable graph re-implements these on tape nodes; the functions here
//! are the reference semantics and serve inference-time diagnostics. Four
//! terms make up the full objective:
//!
//! * binary cross-entropy on the fused head's fake probability,
//! * a decorrelation penalty — the Pearson correlation between the two
//!   branches' feature vectors, pushing the auxiliary branch away from
//!   whatever the main branch already encodes,
//! * an evidential log-likelihood term per branch,
//! * an uncertainty-calibration term per branch, annealed over training so
//!   that early epochs tolerate confident mistakes and late epochs punish
//!   them.

use crate::error::{Error, Result};
use crate::evidential::EvidenceVector;

/// Probabilities are clipped to `[LOG_EPS, 1 - LOG_EPS]` inside logarithms.
pub const LOG_EPS: f64 = 1e-7;

/// Added to the Pearson denominator in guarded (training) mode so a
/// zero-variance feature vector cannot produce a division by zero.
pub const DEC_EPS: f64 = 1e-8;

/// Pearson correlation of two equal-length vectors.
///
/// Strict form: zero variance in either input is an error. Training uses
/// [`pearson_guarded`] instead, which degrades to 0 in that case.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (num, da, db) = pearson_terms(a, b)?;
    if da <= 0.0 || db <= 0.0 {
        return Err(Error::DegenerateInput(
            "pearson correlation of a constant vector is undefined".into(),
        ));
    }
    Ok(num / (da * db).sqrt())
}

/// Pearson correlation with an epsilon-guarded denominator; total collapse of
/// either input yields 0 instead of an error.
pub fn pearson_guarded(a: &[f64], b: &[f64]) -> Result<f64> {
    let (num, da, db) = pearson_terms(a, b)?;
    Ok(num / ((da * db).sqrt() + DEC_EPS))
}

fn pearson_terms(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::InvalidInput(
            "correlation needs at least 2 components".into(),
        ));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in a.iter().zip(b) {
        let cx = x - ma;
        let cy = y - mb;
        num += cx * cy;
        da += cx * cx;
        db += cy * cy;
    }
    Ok((num, da, db))
}

/// Whether the decorrelation penalty is the signed correlation (default) or
/// its absolute value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecorrelationMode {
    #[default]
    Signed,
    Absolute,
}

/// Decorrelation penalty for one pair of feature vectors.
pub fn decorrelation_loss(f_main: &[f64], f_aux: &[f64], mode: DecorrelationMode) -> Result<f64> {
    let rho = pearson_guarded(f_main, f_aux)?;
    Ok(match mode {
        DecorrelationMode::Signed => rho,
        DecorrelationMode::Absolute => rho.abs(),
    })
}

/// Binary cross-entropy of a fake-probability `p` against label `y`
/// (`true` = fake). `p` is clipped before the logarithms.
pub fn binary_cross_entropy(p: f64, y: bool) -> Result<f64> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!(
            "probability out of range: {p}"
        )));
    }
    let p = p.clamp(LOG_EPS, 1.0 - LOG_EPS);
    Ok(if y { -p.ln() } else { -(1.0 - p).ln() })
}

/// Evidential log-likelihood for one sample: `ln S - ln (e_y + 1)`, the
/// negative log of the labeled class's belief mass.
pub fn edl_loss(evidence: &EvidenceVector, label: usize) -> Result<f64> {
    if label >= evidence.num_classes() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} classes",
            evidence.num_classes()
        )));
    }
    let strength: f64 = evidence.values().iter().map(|e| e + 1.0).sum();
    Ok(strength.ln() - (evidence.values()[label] + 1.0).ln())
}

/// Per-sample inputs to the uncertainty-calibration term.
#[derive(Debug, Clone, Copy)]
pub struct EucSample {
    /// Predicted-class belief `p`.
    pub max_belief: f64,
    /// Dirichlet uncertainty `u`.
    pub uncertainty: f64,
    pub predicted_class: usize,
    pub label: usize,
}

/// Sum-reduced uncertainty-calibration loss over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EucLoss {
    pub value: f64,
    /// Set when the batch was empty; the value is then 0.
    pub empty_batch: bool,
}

/// Uncertainty calibration: accurate samples should be certain
/// (`-lambda * p * ln(1 - u)`), inaccurate ones uncertain
/// (`-(1 - lambda) * (1 - p) * ln u`). Sum over the batch.
pub fn euc_loss(batch: &[EucSample], lambda: f64) -> Result<EucLoss> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!(
            "annealing factor out of range: {lambda}"
        )));
    }
    if batch.is_empty() {
        return Ok(EucLoss {
            value: 0.0,
            empty_batch: true,
        });
    }
    let mut value = 0.0;
    for s in batch {
        if !(0.0..=1.0).contains(&s.max_belief) || !(0.0..=1.0).contains(&s.uncertainty) {
            return Err(Error::InvalidInput(format!(
                "belief {} / uncertainty {} out of range",
                s.max_belief, s.uncertainty
            )));
        }
        if s.predicted_class == s.label {
            value -= lambda * s.max_belief * (1.0 - s.uncertainty).max(LOG_EPS).ln();
        } else {
            value -= (1.0 - lambda) * (1.0 - s.max_belief) * s.uncertainty.max(LOG_EPS).ln();
        }
    }
    Ok(EucLoss {
        value,
        empty_batch: false,
    })
}

/// Exponential annealing of the calibration trade-off:
/// `lambda_t = lambda0 ^ (1 - t / T)`, rising from `lambda0` at epoch 0
/// to 1 at epoch `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub lambda0: f64,
    pub total_epochs: u32,
}

impl AnnealSchedule {
    pub fn new(lambda0: f64, total_epochs: u32) -> Result<Self> {
        if !(lambda0 > 0.0 && lambda0 <= 1.0) {
            return Err(Error::Config(format!(
                "lambda0 must lie in (0, 1], got {lambda0}"
            )));
        }
        if total_epochs == 0 {
            return Err(Error::Config("total_epochs must be positive".into()));
        }
        Ok(Self {
            lambda0,
            total_epochs,
        })
    }

    /// Annealing factor at epoch `t` (0-based, at most `total_epochs`).
    pub fn factor(&self, t: u32) -> Result<f64> {
        if t > self.total_epochs {
            return Err(Error::InvalidInput(format!(
                "epoch {t} beyond schedule length {}",
                self.total_epochs
            )));
        }
        Ok(self
            .lambda0
            .powf(1.0 - t as f64 / self.total_epochs as f64))
    }
}

/// The four loss terms and their unweighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub edu_main: f64,
    pub edu_aux: f64,
    pub ce_fused: f64,
    pub dec: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(edu_main: f64, edu_aux: f64, ce_fused: f64, dec: f64) -> Self {
        Self {
            edu_main,
            edu_aux,
            ce_fused,
            dec,
            total: edu_main + edu_aux + ce_fused + dec,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn pearson_known_value() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < TOL);
    }

    #[test]
    fn pearson_perfect_and_inverse() {
        let a = [0.5, 1.5, 2.5];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < TOL);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < TOL);
    }

    #[test]
    fn pearson_rejects_constant_input() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateInput(_))
        ));
        // Guarded form degrades to zero instead.
        let r = pearson_guarded(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn pearson_rejects_length_mismatch() {
        assert!(pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn decorrelation_modes() {
        let a = [0.5, 1.5, 2.5, 0.0];
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        let signed = decorrelation_loss(&a, &neg, DecorrelationMode::Signed).unwrap();
        let abs = decorrelation_loss(&a, &neg, DecorrelationMode::Absolute).unwrap();
        assert!(signed < -0.99);
        assert!(abs > 0.99);
    }

    #[test]
    fn cross_entropy_known_values() {
        assert!((binary_cross_entropy(0.7, true).unwrap() + 0.7f64.ln()).abs() < TOL);
        assert!((binary_cross_entropy(0.7, false).unwrap() + 0.3f64.ln()).abs() < 1e-9);
        // Clipping keeps the worst case finite.
        let worst = binary_cross_entropy(0.0, true).unwrap();
        assert!((worst + LOG_EPS.ln()).abs() < 1e-9);
        assert!(binary_cross_entropy(1.5, true).is_err());
        assert!(binary_cross_entropy(f64::NAN, true).is_err());
    }

    #[test]
    fn edl_known_value() {
        let e = EvidenceVector::new(vec![8.0, 0.0]).unwrap();
        // ln 10 - ln 9
        assert!((edl_loss(&e, 0).unwrap() - 0.105_360_515_657_826_3).abs() < 1e-12);
        // With the evidence on the wrong class: ln 10 - ln 1.
        assert!((edl_loss(&e, 1).unwrap() - 10.0f64.ln()).abs() < TOL);
    }

    #[test]
    fn edl_zero_evidence() {
        let e = EvidenceVector::new(vec![0.0, 0.0]).unwrap();
        assert!((edl_loss(&e, 0).unwrap() - 2.0f64.ln()).abs() < TOL);
    }

    #[test]
    fn edl_rejects_bad_label() {
        let e = EvidenceVector::new(vec![1.0, 2.0]).unwrap();
        assert!(edl_loss(&e, 2).is_err());
    }

    #[test]
    fn euc_correct_sample() {
        let batch = [EucSample {
            max_belief: 0.9,
            uncertainty: 0.2,
            predicted_class: 1,
            label: 1,
        }];
        let got = euc_loss(&batch, 0.1).unwrap();
        // -0.1 * 0.9 * ln 0.8
        assert!((got.value - 0.020_082_919_618_278_877).abs() < 1e-12);
        assert!(!got.empty_batch);
    }

    #[test]
    fn euc_incorrect_sample() {
        let batch = [EucSample {
            max_belief: 0.6,
            uncertainty: 0.3,
            predicted_class: 0,
            label: 1,
        }];
        let got = euc_loss(&batch, 0.1).unwrap();
        // -0.9 * 0.4 * ln 0.3
        assert!((got.value - 0.433_430_209_557_337_1).abs() < 1e-12);
    }

    #[test]
    fn euc_empty_batch_flags() {
        let got = euc_loss(&[], 0.5).unwrap();
        assert_eq!(got.value, 0.0);
        assert!(got.empty_batch);
    }

    #[test]
    fn euc_rejects_out_of_range() {
        let s = EucSample {
            max_belief: 1.2,
            uncertainty: 0.2,
            predicted_class: 0,
            label: 0,
        };
        assert!(euc_loss(&[s], 0.5).is_err());
        assert!(euc_loss(&[], 1.5).is_err());
    }

    #[test]
    fn anneal_endpoints_and_midpoint() {
        let s = AnnealSchedule::new(0.01, 10).unwrap();
        assert_eq!(s.factor(0).unwrap(), 0.01);
        assert_eq!(s.factor(10).unwrap(), 1.0);
        assert!((s.factor(5).unwrap() - 0.1).abs() < TOL);
        assert!(s.factor(11).is_err());
    }

    #[test]
    fn anneal_rejects_bad_config() {
        assert!(AnnealSchedule::new(0.0, 10).is_err());
        assert!(AnnealSchedule::new(1.5, 10).is_err());
        assert!(AnnealSchedule::new(0.01, 0).is_err());
    }

    #[test]
    fn breakdown_totals() {
        let b = LossBreakdown::new(1.0, 2.0, 0.5, -0.25);
        assert!((b.total - 3.25).abs() < TOL);
    }

    proptest! {
        #[test]
        fn pearson_is_bounded(
            a in proptest::collection::vec(-100.0f64..100.0, 3..12),
            b in proptest::collection::vec(-100.0f64..100.0, 3..12),
        ) {
            let n = a.len().min(b.len());
            if let Ok(r) = pearson(&a[..n], &b[..n]) {
                prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r));
            }
        }

        #[test]
        fn pearson_is_affine_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 4..8),
            scale in 0.1f64..5.0,
            shift in -5.0f64..5.0,
        ) {
            let b: Vec<f64> = a.iter().map(|x| x * 1.5 - 2.0).collect();
            let scaled: Vec<f64> = b.iter().map(|x| x * scale + shift).collect();
            if let (Ok(r1), Ok(r2)) = (pearson(&a, &b), pearson(&a, &scaled)) {
                prop_assert!((r1 - r2).abs() < 1e-6);
            }
        }

        #[test]
        fn anneal_is_monotone(
            lambda0 in 0.001f64..0.999,
            total in 2u32..40,
            t in 1u32..40,
        ) {
            let t = t.min(total);
            let s = AnnealSchedule::new(lambda0, total).unwrap();
            prop_assert!(s.factor(t).unwrap() > s.factor(t - 1).unwrap());
        }

        #[test]
        fn euc_is_non_negative(
            p in 0.0f64..1.0,
            u in 0.0f64..1.0,
            correct in proptest::bool::ANY,
            lambda in 0.0f64..1.0,
        ) {
            let s = EucSample {
                max_belief: p,
                uncertainty: u,
                predicted_class: 0,
                label: if correct { 0 } else { 1 },
            };
            let got = euc_loss(&[s], lambda).unwrap();
            prop_assert!(got.value >= 0.0);
        }
    }
}
