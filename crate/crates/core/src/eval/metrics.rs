//! ROC curves and the area under them.
//!
//! Scores here are anomaly-oriented: larger means more anomalous, and the
//! anomalous label is the positive class.

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::flatten::Label;

fn class_counts(scores: &[f64], labels: &[Label]) -> Result<(u64, u64), EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFiniteScore);
    }
    let pos = labels.iter().filter(|&&l| l == Label::Anomalous).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok((pos, neg))
}

/// Rank-sum AUC with ties counted as one half.
///
/// Computed with doubled integer ranks, so the numerator is exact and the
/// result equals explicit pair counting bit for bit.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1 share their average
        let doubled = (start + end + 2) as u128;
        let positives = order[start..=end]
            .iter()
            .filter(|&&i| labels[i] == Label::Anomalous)
            .count() as u128;
        doubled_rank_sum += doubled * positives;
        start = end + 1;
    }
    let p = u128::from(pos);
    let numerator = doubled_rank_sum - p * (p + 1);
    Ok(numerator as f64 / (2 * p * u128::from(neg)) as f64)
}

/// Explicit count over every positive/negative pair.
pub fn auc_pairwise(scores: &[f64], labels: &[Label]) -> Result<f64, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut doubled: u128 = 0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != Label::Anomalous {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == Label::Anomalous {
                continue;
            }
            if si > sj {
                doubled += 2;
            } else if si == sj {
                doubled += 1;
            }
        }
    }
    Ok(doubled as f64 / (2 * u128::from(pos) * u128::from(neg)) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Rows scoring at or above this value are flagged.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// From (0, 0) to (1, 1), one point per distinct score.
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

impl RocCurve {
    pub fn trapezoid_area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    /// Best true positive rate among thresholds whose false positive rate is
    /// at most `max_fpr`.
    pub fn tpr_at_fpr(&self, max_fpr: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.fpr <= max_fpr)
            .map(|p| p.tpr)
            .fold(0.0, f64::max)
    }
}

pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<RocCurve, EvalError> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut start = 0;
    while start < order.len() {
        let threshold = scores[order[start]];
        let mut end = start;
        while end < order.len() && scores[order[end]] == threshold {
            if labels[order[end]] == Label::Anomalous {
                tp += 1;
            } else {
                fp += 1;
            }
            end += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
        start = end;
    }
    Ok(RocCurve {
        points,
        auc: auc(scores, labels)?,
    })
}
