//! Evaluation metrics: exact ranking AUC, thresholded accuracy and
//! half-total error rate, and video-level aggregation of frame scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::threshold::{PredictionRecord, ScoreKind, accuracy_at};

/// AUC as the rank-sum (Mann–Whitney) statistic: the fraction of
/// (fake, real) pairs where the fake sample scores higher, ties counting
/// one half. Computed exactly from average ranks, not by curve sampling.
pub fn auc(records: &[PredictionRecord], kind: ScoreKind) -> Result<f64> {
    let scores: Vec<f64> = records.iter().map(|r| r.score(kind)).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    auc_from_scores(&scores, &labels)
}

/// [`auc`] over bare score/label slices.
pub fn auc_from_scores(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidInput(format!("label must be 0 or 1, got {bad}")));
    }
    let n = scores.len();
    let n_fake = labels.iter().filter(|&&y| y == 1).count();
    let n_real = n - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(Error::UndefinedMetric(format!(
            "AUC needs both classes, got {n_fake} fake / {n_real} real"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Average ranks within tie groups, then sum the fake ranks.
    let mut rank_sum_fake = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j share the average.
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] == 1 {
                rank_sum_fake += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_fake - (n_fake * (n_fake + 1)) as f64 / 2.0;
    Ok(u / (n_fake as f64 * n_real as f64))
}

/// Half-total error rate at threshold `tau`: the mean of the fake-
/// acceptance rate (fake scored below `tau`) and the real-rejection rate
/// (real scored at or above `tau`).
pub fn hter(records: &[PredictionRecord], tau: f64, kind: ScoreKind) -> Result<f64> {
    let scores: Vec<f64> = records.iter().map(|r| r.score(kind)).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    hter_from_scores(&scores, &labels, tau)
}

/// [`hter`] over bare score/label slices.
pub fn hter_from_scores(scores: &[f64], labels: &[u8], tau: f64) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite score {bad}")));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidInput(format!("label must be 0 or 1, got {bad}")));
    }
    if !tau.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite threshold {tau}")));
    }
    let n_fake = labels.iter().filter(|&&y| y == 1).count();
    let n_real = labels.len() - n_fake;
    if n_fake == 0 || n_real == 0 {
        return Err(Error::UndefinedMetric(format!(
            "HTER needs both classes, got {n_fake} fake / {n_real} real"
        )));
    }
    let far = scores
        .iter()
        .zip(labels)
        .filter(|&(s, &y)| y == 1 && *s < tau)
        .count() as f64
        / n_fake as f64;
    let frr = scores
        .iter()
        .zip(labels)
        .filter(|&(s, &y)| y == 0 && *s >= tau)
        .count() as f64
        / n_real as f64;
    Ok((far + frr) / 2.0)
}

/// The standard evaluation bundle at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auc: f64,
    pub acc: f64,
    pub hter: f64,
    pub n_real: usize,
    pub n_fake: usize,
    /// Threshold used for `acc` and `hter`.
    pub tau: f64,
}

/// Evaluate AUC, accuracy, and HTER in one pass.
pub fn evaluate(records: &[PredictionRecord], tau: f64, kind: ScoreKind) -> Result<MetricReport> {
    let n_fake = records.iter().filter(|r| r.is_fake()).count();
    Ok(MetricReport {
        auc: auc(records, kind)?,
        acc: accuracy_at(records, tau, kind)?,
        hter: hter(records, tau, kind)?,
        n_real: records.len() - n_fake,
        n_fake,
        tau,
    })
}

/// How a video's adjusted score is derived from its frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VideoAdjust {
    /// `mean(p) / mean(u)` — adjust after averaging (default).
    #[default]
    RatioOfMeans,
    /// `mean(p / u)` — average the per-frame adjusted scores. Breaks the
    /// record-level `p_adj == p/u` identity by design.
    MeanOfRatios,
}

/// Collapse frame records into one record per video by arithmetic mean of
/// `p` and `u`. Videos keep their first-appearance order; the aggregate's
/// sample id is the video id. Frames of one video must agree on the label.
pub fn video_aggregate(
    records: &[PredictionRecord],
    adjust: VideoAdjust,
) -> Result<Vec<PredictionRecord>> {
    struct Group {
        dataset_id: String,
        label: u8,
        p_sum: f64,
        u_sum: f64,
        adj_sum: f64,
        count: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, Group> = std::collections::HashMap::new();
    for r in records {
        match groups.get_mut(&r.video_id) {
            None => {
                order.push(r.video_id.clone());
                groups.insert(
                    r.video_id.clone(),
                    Group {
                        dataset_id: r.dataset_id.clone(),
                        label: r.label,
                        p_sum: r.p,
                        u_sum: r.u,
                        adj_sum: r.p_adj,
                        count: 1,
                    },
                );
            }
            Some(g) => {
                if g.label != r.label {
                    return Err(Error::Data(format!(
                        "video {} mixes labels {} and {}",
                        r.video_id, g.label, r.label
                    )));
                }
                g.p_sum += r.p;
                g.u_sum += r.u;
                g.adj_sum += r.p_adj;
                g.count += 1;
            }
        }
    }
    order
        .into_iter()
        .map(|video_id| {
            let g = &groups[&video_id];
            let n = g.count as f64;
            let (p, u) = (g.p_sum / n, g.u_sum / n);
            match adjust {
                VideoAdjust::RatioOfMeans => {
                    PredictionRecord::new(video_id.clone(), video_id, g.dataset_id.clone(), g.label, p, u)
                }
                VideoAdjust::MeanOfRatios => PredictionRecord::with_adjusted(
                    video_id.clone(),
                    video_id,
                    g.dataset_id.clone(),
                    g.label,
                    p,
                    u,
                    g.adj_sum / n,
                ),
            }
        })
        .collect()
}
