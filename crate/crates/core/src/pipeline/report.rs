use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autoencoder::TrainReport;
use crate::error::{Error, Result};
use crate::evaluation::{ClassMetrics, ConfusionMatrix, MetricsReport};
use crate::selection::FeatureRanking;

use super::run::ModelRun;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub first_epoch_loss: f64,
    pub final_epoch_loss: f64,
    pub final_validation_mse: f64,
}

impl From<&TrainReport> for TrainSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            epochs: r.loss_history.len(),
            first_epoch_loss: r.loss_history.first().copied().unwrap_or(f64::NAN),
            final_epoch_loss: r.loss_history.last().copied().unwrap_or(f64::NAN),
            final_validation_mse: r.final_validation_mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub feature_count: usize,
    pub auc: f64,
    pub g_mean: f64,
    pub optimal_threshold: f64,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub train: TrainSummary,
}

impl ModelSummary {
    pub fn from_run(name: &str, run: &ModelRun) -> Self {
        let ev = &run.evaluation;
        Self {
            name: name.to_string(),
            feature_count: run.trained.model.input_dim,
            auc: ev.roc.auc,
            g_mean: ev.g_mean,
            optimal_threshold: ev.threshold,
            confusion: ev.metrics.confusion,
            metrics: ev.metrics.clone(),
            train: TrainSummary::from(&run.trained.report),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub provenance: Provenance,
    pub baseline: ModelSummary,
    pub optimized: ModelSummary,
    pub selected_features: Vec<String>,
    pub ranking: FeatureRanking,
    pub warnings: Vec<String>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::parse("report", e))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse("report", e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Plain-text summary with one classification report per model.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "seed {}  config {}\n",
            self.provenance.seed,
            &self.provenance.config_hash[..self.provenance.config_hash.len().min(16)]
        );
        let _ = writeln!(
            out,
            "{:<12}{:>10}{:>10}{:>10}{:>12}",
            "model", "features", "AUC", "G-mean", "threshold"
        );
        for m in [&self.baseline, &self.optimized] {
            let _ = writeln!(
                out,
                "{:<12}{:>10}{:>10.3}{:>10.3}{:>12.4}",
                m.name, m.feature_count, m.auc, m.g_mean, m.optimal_threshold
            );
        }
        for m in [&self.baseline, &self.optimized] {
            let _ = writeln!(
                out,
                "\n== {} ({} features), threshold {:.4}\n",
                m.name, m.feature_count, m.optimal_threshold
            );
            out.push_str(&classification_report(&m.metrics));
            let c = &m.confusion;
            let _ = writeln!(out, "\nconfusion matrix (rows = true, cols = predicted)");
            let _ = writeln!(out, "{:>8}{:>10}{:>10}", "", "0", "1");
            let _ = writeln!(out, "{:>8}{:>10}{:>10}", "0", c.tn, c.fp);
            let _ = writeln!(out, "{:>8}{:>10}{:>10}", "1", c.fn_, c.tp);
        }
        out.push_str("\nundefined ratios (0/0) are reported as 0.\n");
        if !self.warnings.is_empty() {
            out.push_str("\nwarnings:\n");
            for w in &self.warnings {
                let _ = writeln!(out, "  {w}");
            }
        }
        out
    }
}

/// Per-class precision/recall/f1/support table with accuracy, macro and
/// weighted averages.
pub fn classification_report(m: &MetricsReport) -> String {
    let mut out = String::new();
    let row = |out: &mut String, name: &str, c: &ClassMetrics| {
        let _ = writeln!(
            out,
            "{name:>12}{:>11.2}{:>10.2}{:>10.2}{:>10}",
            c.precision, c.recall, c.f1, c.support
        );
    };
    let _ = writeln!(
        out,
        "{:>12}{:>11}{:>10}{:>10}{:>10}\n",
        "", "precision", "recall", "f1-score", "support"
    );
    row(&mut out, "0.0", &m.class_0);
    row(&mut out, "1.0", &m.class_1);
    out.push('\n');
    let _ = writeln!(
        out,
        "{:>12}{:>11}{:>10}{:>10.2}{:>10}",
        "accuracy",
        "",
        "",
        m.accuracy,
        m.confusion.total()
    );
    row(&mut out, "macro avg", &m.macro_avg);
    row(&mut out, "weighted avg", &m.weighted_avg);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::metrics;

    #[test]
    fn classification_report_layout() {
        let m = metrics(&ConfusionMatrix {
            tp: 9900,
            tn: 32500,
            fp: 17500,
            fn_: 100,
        })
        .unwrap();
        let text = classification_report(&m);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].contains("precision") && lines[0].contains("support"));
        assert!(lines[2].trim_start().starts_with("0.0"));
        assert!(lines[2].ends_with("50000"));
        assert!(lines[3].ends_with("10000"));
        assert!(lines[5].contains("accuracy") && lines[5].ends_with("60000"));
        assert!(lines[6].contains("macro avg"));
        assert!(lines[7].contains("weighted avg"));
        // 42400 / 60000 correct
        assert!(lines[5].contains("0.71"));
    }
}
