//! Decision thresholds over evidential scores.
//!
//! A detector emits a fake probability `p` and an uncertainty `u` per
//! sample. Dividing `p` by `u` rewards confident predictions, giving the
//! adjusted score `p' = p / u` (deliberately unclipped — thresholds are
//! searched over the observed score support, so values above 1 carry
//! information). The optimal threshold is the exact argmax of accuracy over
//! every distinct observed score plus one sentinel above the maximum (which
//! realizes the everything-is-real classification). A fixed-step grid
//! search covers the black-box setting where only overall accuracy is
//! observable, and a transfer evaluation applies one set's optimal
//! threshold to another.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which score column drives classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    /// The fake-class probability `p`.
    #[default]
    RawP,
    /// The uncertainty-adjusted score `p / u`.
    AdjustedP,
}

/// One scored sample. Classification is `score ≥ τ → fake`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub video_id: String,
    pub dataset_id: String,
    /// 1 = fake, 0 = real.
    pub label: u8,
    /// Fake probability in `[0, 1]`.
    pub p: f64,
    /// Uncertainty in `(0, 1]`.
    pub u: f64,
    /// `p / u`, in `[0, ∞)`; never below `p`.
    pub p_adj: f64,
}

impl PredictionRecord {
    pub fn new(
        sample_id: impl Into<String>,
        video_id: impl Into<String>,
        dataset_id: impl Into<String>,
        label: u8,
        p: f64,
        u: f64,
    ) -> Result<Self> {
        let p_adj = adjust_probability(p, u)?;
        Self::with_adjusted(sample_id, video_id, dataset_id, label, p, u, p_adj)
    }

    /// Build a record whose adjusted score is supplied by the caller rather
    /// than derived — used by aggregation modes that average ratios.
    pub fn with_adjusted(
        sample_id: impl Into<String>,
        video_id: impl Into<String>,
        dataset_id: impl Into<String>,
        label: u8,
        p: f64,
        u: f64,
        p_adj: f64,
    ) -> Result<Self> {
        if label > 1 {
            return Err(Error::InvalidInput(format!(
                "label must be 0 or 1, got {label}"
            )));
        }
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidInput(format!("probability out of range: {p}")));
        }
        if !u.is_finite() || !(u > 0.0 && u <= 1.0) {
            return Err(Error::InvalidInput(format!("uncertainty out of range: {u}")));
        }
        if !p_adj.is_finite() || p_adj < 0.0 {
            return Err(Error::InvalidInput(format!(
                "adjusted score out of range: {p_adj}"
            )));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            video_id: video_id.into(),
            dataset_id: dataset_id.into(),
            label,
            p,
            u,
            p_adj,
        })
    }

    pub fn score(&self, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::RawP => self.p,
            ScoreKind::AdjustedP => self.p_adj,
        }
    }

    pub fn is_fake(&self) -> bool {
        self.label == 1
    }
}

/// `p / u`: confident (low-`u`) predictions are boosted, uncertain ones are
/// left near their raw probability. Unclipped.
pub fn adjust_probability(p: f64, u: f64) -> Result<f64> {
    if !p.is_finite() || !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("probability out of range: {p}")));
    }
    if !u.is_finite() || !(u > 0.0 && u <= 1.0) {
        return Err(Error::InvalidInput(format!("uncertainty out of range: {u}")));
    }
    Ok(p / u)
}

/// Accuracy of the rule `score ≥ τ → fake` over `records`.
pub fn accuracy_at(records: &[PredictionRecord], tau: f64, kind: ScoreKind) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to evaluate".into()));
    }
    Ok(correct_count(records, tau, kind) as f64 / records.len() as f64)
}

fn correct_count(records: &[PredictionRecord], tau: f64, kind: ScoreKind) -> usize {
    records
        .iter()
        .filter(|r| (r.score(kind) >= tau) == r.is_fake())
        .count()
}

/// One evaluated threshold candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tau: f64,
    pub acc: f64,
}

/// Result of an optimal-threshold search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    /// The selected threshold: the midpoint of the widest accuracy-
    /// maximizing interval between adjacent distinct scores.
    pub tau_ot: f64,
    /// Best achievable accuracy; equals the maximum over `curve`.
    pub acc_at_tau: f64,
    /// Every candidate (each distinct score, plus a sentinel one above the
    /// maximum) with its accuracy, in ascending `tau` order.
    pub curve: Vec<CurvePoint>,
    pub score_kind: ScoreKind,
    /// Set when only one label class was present; the search still runs but
    /// the result is degenerate.
    pub single_class: bool,
}

/// Exact accuracy-argmax threshold search. Candidates are every distinct
/// observed score (`score ≥ τ` classifies that score as fake) plus
/// `max + 1`, which classifies everything as real. Among equally accurate
/// candidates the one ending the widest score gap wins, and the reported
/// threshold is that gap's midpoint; the lowest candidate's gap is empty,
/// so it reports itself.
pub fn optimal_threshold(records: &[PredictionRecord], kind: ScoreKind) -> Result<ThresholdReport> {
    let scores: Vec<f64> = records.iter().map(|r| r.score(kind)).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let mut report = optimal_threshold_from_scores(&scores, &labels)?;
    report.score_kind = kind;
    Ok(report)
}

/// [`optimal_threshold`] over bare score/label slices; the report is tagged
/// [`ScoreKind::RawP`] since bare scores carry no kind of their own.
pub fn optimal_threshold_from_scores(scores: &[f64], labels: &[u8]) -> Result<ThresholdReport> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::InvalidInput("no records to search".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidInput(format!("label must be 0 or 1, got {bad}")));
    }
    let n = scores.len();
    let n_fake = labels.iter().filter(|&&y| y == 1).count();
    let single_class = n_fake == 0 || n_fake == n;

    let mut sorted: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| (s, y == 1))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Walk ascending scores once. At candidate τ = v, the correct set is
    // {fake with score ≥ v} ∪ {real with score < v}; both counts come from
    // the prefix strictly below v.
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    let mut fake_below = 0usize;
    let mut real_below = 0usize;
    let mut i = 0;
    while i < n {
        let v = sorted[i].0;
        candidates.push((v, (n_fake - fake_below) + real_below));
        while i < n && sorted[i].0 == v {
            if sorted[i].1 {
                fake_below += 1;
            } else {
                real_below += 1;
            }
            i += 1;
        }
    }
    let max_score = sorted[n - 1].0;
    candidates.push((max_score + 1.0, real_below)); // everything real

    let best_count = candidates.iter().map(|&(_, c)| c).max().unwrap();
    let mut best_interval: Option<(f64, f64, f64)> = None; // (width, lo, hi)
    for (k, &(tau, count)) in candidates.iter().enumerate() {
        if count != best_count {
            continue;
        }
        let lo = if k == 0 { tau } else { candidates[k - 1].0 };
        let width = tau - lo;
        let better = match best_interval {
            None => true,
            Some((w, ..)) => width > w,
        };
        if better {
            best_interval = Some((width, lo, tau));
        }
    }
    let (_, lo, hi) = best_interval.expect("at least one candidate");
    let curve = candidates
        .iter()
        .map(|&(tau, count)| CurvePoint {
            tau,
            acc: count as f64 / n as f64,
        })
        .collect();
    Ok(ThresholdReport {
        tau_ot: (lo + hi) / 2.0,
        acc_at_tau: best_count as f64 / n as f64,
        curve,
        score_kind: ScoreKind::RawP,
        single_class,
    })
}

/// Fixed-step grid search over `[0, hi]` against a black-box accuracy
/// oracle: evaluates `{0, step, 2·step, …} ∪ {hi}` and returns the best
/// `(τ, ACC)` pair, lowest τ on ties.
pub fn grid_threshold(
    oracle: impl Fn(f64) -> f64,
    hi: f64,
    step: f64,
) -> Result<(f64, f64)> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("grid step must be positive, got {step}")));
    }
    if !hi.is_finite() || hi < 0.0 {
        return Err(Error::InvalidInput(format!("grid upper bound out of range: {hi}")));
    }
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let tau = k as f64 * step;
        if tau >= hi {
            break;
        }
        grid.push(tau);
        k += 1;
    }
    grid.push(hi);
    let mut best = (grid[0], oracle(grid[0]));
    for &tau in &grid[1..] {
        let acc = oracle(tau);
        if acc > best.1 {
            best = (tau, acc);
        }
    }
    Ok(best)
}

/// Outcome of carrying one set's optimal threshold to another.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferOutcome {
    pub source_report: ThresholdReport,
    /// Accuracy of the source threshold on the target records.
    pub target_acc: f64,
}

/// Search the optimal threshold on `source`, then evaluate it on `target`.
/// Both sides must use the same score kind.
pub fn transfer_eval(
    source: &[PredictionRecord],
    source_kind: ScoreKind,
    target: &[PredictionRecord],
    target_kind: ScoreKind,
) -> Result<TransferOutcome> {
    if source_kind != target_kind {
        return Err(Error::Config(format!(
            "score kinds differ: source {source_kind:?}, target {target_kind:?}"
        )));
    }
    let source_report = optimal_threshold(source, source_kind)?;
    let target_acc = accuracy_at(target, source_report.tau_ot, target_kind)?;
    Ok(TransferOutcome {
        source_report,
        target_acc,
    })
}

const SCORE_HEADER: [&str; 6] = ["sample_id", "video_id", "dataset_id", "label", "p", "u"];

/// Write records as delimited text with a fixed header. The adjusted score
/// is not stored; it is derived on load.
pub fn write_scores(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SCORE_HEADER)
        .map_err(|e| Error::Format(format!("score header write failed: {e}")))?;
    for r in records {
        w.write_record([
            r.sample_id.as_str(),
            r.video_id.as_str(),
            r.dataset_id.as_str(),
            &r.label.to_string(),
            &r.p.to_string(),
            &r.u.to_string(),
        ])
        .map_err(|e| Error::Format(format!("score row write failed: {e}")))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a score dump back, validating every row and deriving `p_adj`.
pub fn read_scores(path: &Path) -> Result<Vec<PredictionRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r
        .headers()
        .map_err(|e| Error::Format(format!("score header read failed: {e}")))?;
    if header != SCORE_HEADER.as_slice() {
        return Err(Error::Format(format!(
            "unexpected score header {header:?}, want {SCORE_HEADER:?}"
        )));
    }
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let line = i + 2; // header is line 1
        let row = row.map_err(|e| Error::Data(format!("score line {line}: {e}")))?;
        if row.len() != SCORE_HEADER.len() {
            return Err(Error::Data(format!(
                "score line {line}: {} fields, want {}",
                row.len(),
                SCORE_HEADER.len()
            )));
        }
        let field = |j: usize| row.get(j).unwrap_or_default();
        let label: u8 = field(3)
            .parse()
            .map_err(|_| Error::Data(format!("score line {line}: bad label {:?}", field(3))))?;
        let p: f64 = field(4)
            .parse()
            .map_err(|_| Error::Data(format!("score line {line}: bad p {:?}", field(4))))?;
        let u: f64 = field(5)
            .parse()
            .map_err(|_| Error::Data(format!("score line {line}: bad u {:?}", field(5))))?;
        let rec = PredictionRecord::new(field(0), field(1), field(2), label, p, u)
            .map_err(|e| Error::Data(format!("score line {line}: {e}")))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    const TOL: f64 = 1e-12;

    fn rec(label: u8, p: f64, u: f64) -> PredictionRecord {
        PredictionRecord::new("s", "v", "d", label, p, u).unwrap()
    }

    fn set(pairs: &[(f64, u8)]) -> Vec<PredictionRecord> {
        pairs.iter().map(|&(p, y)| rec(y, p, 1.0)).collect()
    }

    /// Independent search: evaluate accuracy below the minimum, at every
    /// adjacent-score midpoint, at every observed score, and above the
    /// maximum.
    fn brute_force_best_acc(records: &[PredictionRecord], kind: ScoreKind) -> f64 {
        let mut scores: Vec<f64> = records.iter().map(|r| r.score(kind)).collect();
        scores.sort_by(f64::total_cmp);
        scores.dedup();
        let mut taus = vec![scores[0] - 1.0, scores[scores.len() - 1] + 1.0];
        taus.extend_from_slice(&scores);
        for w in scores.windows(2) {
            taus.push((w[0] + w[1]) / 2.0);
        }
        taus.iter()
            .map(|&t| accuracy_at(records, t, kind).unwrap())
            .fold(0.0, f64::max)
    }

    #[test]
    fn adjustment_examples() {
        assert!((adjust_probability(0.7, 1.0).unwrap() - 0.7).abs() < TOL);
        assert!((adjust_probability(0.9, 0.2).unwrap() - 4.5).abs() < TOL);
        assert_eq!(adjust_probability(0.0, 0.3).unwrap(), 0.0);
        assert!(adjust_probability(0.5, 0.0).is_err());
        assert!(adjust_probability(0.5, -0.1).is_err());
        assert!(adjust_probability(0.5, 1.5).is_err());
        assert!(adjust_probability(1.2, 0.5).is_err());
    }

    #[test]
    fn record_keeps_the_ratio_invariant() {
        let r = rec(1, 0.9, 0.3);
        assert!((r.p_adj - r.p / r.u).abs() < TOL);
        assert!(r.p_adj >= r.p);
        assert!(PredictionRecord::new("s", "v", "d", 2, 0.5, 0.5).is_err());
    }

    #[test]
    fn accuracy_examples() {
        let records = set(&[(0.2, 0), (0.4, 0), (0.6, 1), (0.8, 1)]);
        assert_eq!(accuracy_at(&records, 0.5, ScoreKind::RawP).unwrap(), 1.0);
        // Above every score: everything classified real.
        assert_eq!(accuracy_at(&records, 0.9, ScoreKind::RawP).unwrap(), 0.5);
        // At the minimum score: everything classified fake.
        assert_eq!(accuracy_at(&records, 0.2, ScoreKind::RawP).unwrap(), 0.5);
        assert!(accuracy_at(&[], 0.5, ScoreKind::RawP).is_err());
    }

    #[test]
    fn separable_case_lands_on_the_gap_midpoint() {
        let records = set(&[(0.2, 0), (0.4, 0), (0.6, 1), (0.8, 1)]);
        let report = optimal_threshold(&records, ScoreKind::RawP).unwrap();
        assert!((report.tau_ot - 0.5).abs() < TOL);
        assert_eq!(report.acc_at_tau, 1.0);
        assert_eq!(report.curve.len(), 5); // four distinct scores + sentinel
        assert!(!report.single_class);
        let max_curve = report.curve.iter().map(|c| c.acc).fold(0.0, f64::max);
        assert_eq!(report.acc_at_tau, max_curve);
        // The reported threshold achieves the reported accuracy.
        assert_eq!(
            accuracy_at(&records, report.tau_ot, ScoreKind::RawP).unwrap(),
            report.acc_at_tau
        );
    }

    #[test]
    fn all_fake_set_thresholds_at_or_below_the_minimum() {
        let records = set(&[(0.3, 1), (0.7, 1)]);
        let report = optimal_threshold(&records, ScoreKind::RawP).unwrap();
        assert!(report.tau_ot <= 0.3);
        assert_eq!(report.acc_at_tau, 1.0);
        assert!(report.single_class);
    }

    #[test]
    fn all_real_set_uses_the_sentinel() {
        let records = set(&[(0.3, 0), (0.7, 0)]);
        let report = optimal_threshold(&records, ScoreKind::RawP).unwrap();
        assert!(report.tau_ot > 0.7);
        assert_eq!(report.acc_at_tau, 1.0);
        assert!(report.single_class);
    }

    #[test]
    fn search_matches_brute_force_on_random_sets() {
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.random_range(1..=50);
            let records: Vec<PredictionRecord> = (0..n)
                .map(|_| {
                    // Coarse scores so ties actually occur.
                    let p = f64::from(rng.random_range(0..=10u32)) / 10.0;
                    rec(u8::from(rng.random::<bool>()), p, 1.0)
                })
                .collect();
            let report = optimal_threshold(&records, ScoreKind::RawP).unwrap();
            let brute = brute_force_best_acc(&records, ScoreKind::RawP);
            assert_eq!(report.acc_at_tau, brute);
            assert_eq!(
                accuracy_at(&records, report.tau_ot, ScoreKind::RawP).unwrap(),
                report.acc_at_tau,
                "midpoint must preserve the argmax accuracy"
            );
        }
    }

    #[test]
    fn unit_uncertainty_makes_both_kinds_identical() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let records: Vec<PredictionRecord> = (0..40)
            .map(|_| rec(u8::from(rng.random::<bool>()), rng.random(), 1.0))
            .collect();
        let raw = optimal_threshold(&records, ScoreKind::RawP).unwrap();
        let adj = optimal_threshold(&records, ScoreKind::AdjustedP).unwrap();
        assert_eq!(raw.tau_ot, adj.tau_ot);
        assert_eq!(raw.acc_at_tau, adj.acc_at_tau);
        assert_eq!(raw.curve, adj.curve);
    }

    #[test]
    fn grid_finds_the_separable_optimum() {
        let records = set(&[(0.2, 0), (0.4, 0), (0.6, 1), (0.8, 1)]);
        let oracle = |t: f64| accuracy_at(&records, t, ScoreKind::RawP).unwrap();
        let (_, acc) = grid_threshold(oracle, 1.0, 0.01).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn coarse_grid_degrades_to_the_endpoints() {
        // A set where τ=0 (all fake) beats τ=1.
        let records = set(&[(0.2, 1), (0.6, 1), (0.8, 0)]);
        let oracle = |t: f64| accuracy_at(&records, t, ScoreKind::RawP).unwrap();
        let (tau, acc) = grid_threshold(oracle, 1.0, 1.5).unwrap();
        assert_eq!(tau, 0.0);
        assert!((acc - 2.0 / 3.0).abs() < TOL);
        assert!(grid_threshold(oracle, 1.0, 0.0).is_err());
        assert!(grid_threshold(oracle, 1.0, -0.5).is_err());
    }

    #[test]
    fn grid_never_beats_the_exact_search_and_matches_on_fine_steps() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.random_range(2..=30);
            let records: Vec<PredictionRecord> = (0..n)
                .map(|_| {
                    let p = f64::from(rng.random_range(1..=9u32)) / 10.0;
                    rec(u8::from(rng.random::<bool>()), p, 1.0)
                })
                .collect();
            let exact = optimal_threshold(&records, ScoreKind::RawP).unwrap();
            let oracle = |t: f64| accuracy_at(&records, t, ScoreKind::RawP).unwrap();
            let (_, coarse_acc) = grid_threshold(&oracle, 1.0, 0.37).unwrap();
            assert!(coarse_acc <= exact.acc_at_tau + TOL);
            // Scores live on the 0.1 lattice, so any step below it is exact.
            let (_, fine_acc) = grid_threshold(&oracle, 1.0, 0.05).unwrap();
            assert_eq!(fine_acc, exact.acc_at_tau);
        }
    }

    #[test]
    fn transfer_self_and_saturation() {
        let source = set(&[(0.2, 0), (0.4, 0), (0.6, 1), (0.8, 1)]);
        let outcome =
            transfer_eval(&source, ScoreKind::RawP, &source, ScoreKind::RawP).unwrap();
        assert_eq!(outcome.target_acc, outcome.source_report.acc_at_tau);
        // Every target score above the source threshold: all classified
        // fake, so accuracy is the target's fake fraction.
        let target = set(&[(0.9, 1), (0.95, 0), (0.99, 1)]);
        let outcome = transfer_eval(&source, ScoreKind::RawP, &target, ScoreKind::RawP).unwrap();
        assert!((outcome.target_acc - 2.0 / 3.0).abs() < TOL);
        assert!(matches!(
            transfer_eval(&source, ScoreKind::RawP, &target, ScoreKind::AdjustedP),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn score_dump_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let records = vec![rec(1, 0.875, 0.25), rec(0, 0.125, 1.0)];
        write_scores(&path, &records).unwrap();
        let back = read_scores(&path).unwrap();
        assert_eq!(back, records);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("sample_id,video_id,dataset_id,label,p,u\n"));
    }

    #[test]
    fn malformed_rows_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(
            &path,
            "sample_id,video_id,dataset_id,label,p,u\na,v,d,1,0.5,0.5\nb,v,d,7,0.5,0.5\n",
        )
        .unwrap();
        let err = read_scores(&path).unwrap_err().to_string();
        assert!(err.contains("line 3"), "got: {err}");
        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(matches!(read_scores(&path), Err(Error::Format(_))));
    }

    proptest! {
        /// Sweeping τ across distinct sorted scores changes accuracy by
        /// exactly one sample at each crossing.
        #[test]
        fn curve_moves_in_unit_steps(
            entries in proptest::collection::btree_map(0u32..1000, any::<bool>(), 2..40)
        ) {
            let records: Vec<PredictionRecord> = entries
                .iter()
                .map(|(&s, &fake)| rec(u8::from(fake), f64::from(s) / 1000.0, 1.0))
                .collect();
            let n = records.len() as f64;
            let report = optimal_threshold(&records, ScoreKind::RawP).unwrap();
            for pair in report.curve.windows(2) {
                let delta = (pair[1].acc - pair[0].acc).abs();
                prop_assert!((delta - 1.0 / n).abs() < 1e-12);
            }
        }

        /// Equal uncertainty preserves score order; lower uncertainty at
        /// equal p strictly raises the adjusted score.
        #[test]
        fn adjustment_order_properties(
            p1 in 0.0f64..=1.0, p2 in 0.0f64..=1.0,
            u in 0.001f64..=1.0, u_low in 0.001f64..=1.0,
        ) {
            let a1 = adjust_probability(p1, u).unwrap();
            let a2 = adjust_probability(p2, u).unwrap();
            prop_assert_eq!(p1 < p2, a1 < a2);
            if p1 > 0.0 && u_low < u {
                prop_assert!(adjust_probability(p1, u_low).unwrap() > a1);
            }
        }
    }
}
