//! Threshold classification, confusion-matrix metrics, ROC/AUC and
//! G-mean-optimal threshold selection. The attack class (1) is positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1` where `score >= threshold`, else `0`.
pub fn classify(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

pub fn confusion(labels: &[u8], predictions: &[u8]) -> Result<ConfusionMatrix> {
    if labels.len() != predictions.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: predictions.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&y, &p) in labels.iter().zip(predictions) {
        match (y != 0, p != 0) {
            (true, true) => cm.tp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// `num / den`, with `0/0 = 0`.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Harmonic mean of precision and recall (0 when both are 0).
pub fn f_score(precision: f64, recall: f64) -> f64 {
    ratio(2.0 * recall * precision, recall + precision)
}

/// `sqrt(recall * specificity)`.
pub fn g_mean(recall: f64, specificity: f64) -> f64 {
    (recall * specificity).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub specificity: f64,
    pub g_mean: f64,
    /// Benign class, treated as the positive class of its own row.
    pub class_0: ClassMetrics,
    pub class_1: ClassMetrics,
    pub macro_avg: ClassMetrics,
    pub weighted_avg: ClassMetrics,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics need at least one instance".into()));
    }
    let (tp, tn, fp, fn_) = (cm.tp as f64, cm.tn as f64, cm.fp as f64, cm.fn_ as f64);
    let accuracy = (tp + tn) / total as f64;
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let specificity = ratio(tn, tn + fp);
    let npv = ratio(tn, tn + fn_);

    let class_1 = ClassMetrics {
        precision,
        recall,
        f1: f_score(precision, recall),
        support: cm.positives(),
    };
    let class_0 = ClassMetrics {
        precision: npv,
        recall: specificity,
        f1: f_score(npv, specificity),
        support: cm.negatives(),
    };
    let avg = |w0: f64, w1: f64| ClassMetrics {
        precision: w0 * class_0.precision + w1 * class_1.precision,
        recall: w0 * class_0.recall + w1 * class_1.recall,
        f1: w0 * class_0.f1 + w1 * class_1.f1,
        support: total,
    };
    let (s0, s1) = (
        class_0.support as f64 / total as f64,
        class_1.support as f64 / total as f64,
    );
    Ok(MetricsReport {
        confusion: *cm,
        accuracy,
        precision,
        recall,
        f_score: class_1.f1,
        specificity,
        g_mean: g_mean(recall, specificity),
        class_0,
        class_1,
        macro_avg: avg(0.5, 0.5),
        weighted_avg: avg(s0, s1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// Thresholds strictly decreasing, starting at `+inf` with (0, 0).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve over the distinct scores, with the area from the trapezoid rule.
pub fn roc(labels: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if labels.len() != scores.len() {
        return Err(Error::Dimension {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count() as u64;
    let n_neg = labels.len() as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] != 0 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { points, auc })
}

/// The finite curve threshold maximizing `sqrt(tpr * (1 - fpr))`; ties go to
/// the larger threshold. Returns `(threshold, g_mean)`.
pub fn optimal_threshold(curve: &RocCurve) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for p in curve.points.iter().filter(|p| p.threshold.is_finite()) {
        let g = g_mean(p.tpr, 1.0 - p.fpr);
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((p.threshold, g));
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("ROC curve has no finite thresholds".into()))
}
