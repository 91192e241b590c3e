//! Classification metrics: rank AUC and confusion-matrix scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Five-metric report for one evaluation. `auc` is None when the truth
/// labels contain a single class (rank statistic undefined).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: Option<f64>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Rank AUC with half-credit for ties: P(score_pos > score_neg) +
/// 0.5·P(score_pos = score_neg) over all positive/negative pairs.
pub fn auc_rank(y_true: &[bool], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::argument(format!(
            "{} labels vs {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::argument("scores must be finite"));
    }
    let n_pos = y_true.iter().filter(|&&y| y).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data(
            "AUC undefined: truth labels contain a single class",
        ));
    }
    let mut u = 0.0;
    for (i, &yi) in y_true.iter().enumerate() {
        if !yi {
            continue;
        }
        for (j, &yj) in y_true.iter().enumerate() {
            if yj {
                continue;
            }
            if scores[i] > scores[j] {
                u += 1.0;
            } else if scores[i] == scores[j] {
                u += 0.5;
            }
        }
    }
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Confusion-matrix metrics at `threshold` (predicted positive when score
/// ≥ threshold; positive class = patient). Empty denominators score 0.
pub fn compute_metrics(y_true: &[bool], scores: &[f64], threshold: f64) -> Result<Metrics> {
    if y_true.is_empty() {
        return Err(Error::argument("no samples"));
    }
    if y_true.len() != scores.len() {
        return Err(Error::argument(format!(
            "{} labels vs {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    let auc = auc_rank(y_true, scores).ok();
    let (mut tp, mut fp, mut tn, mut fned) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (&y, &s) in y_true.iter().zip(scores.iter()) {
        let pred = s >= threshold;
        match (y, pred) {
            (true, true) => tp += 1.0,
            (true, false) => fned += 1.0,
            (false, true) => fp += 1.0,
            (false, false) => tn += 1.0,
        }
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fned);
    Ok(Metrics {
        auc,
        accuracy: (tp + tn) / y_true.len() as f64,
        precision,
        recall,
        f1: ratio(2.0 * precision * recall, precision + recall),
    })
}
