//! The two-detector experiment: a baseline autoencoder on every feature, and
//! an optimized one retrained on the top-k features ranked by KernelSHAP
//! attributions of attack reconstruction errors.

mod config;
pub mod plot;
mod report;
mod run;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

pub use config::{DataSource, ExplainSettings, RunConfig, DEFAULT_SEED};
pub use report::{classification_report, ComparisonReport, ModelSummary, Provenance, TrainSummary};
pub use run::{
    evaluate_stage, explain_stage, explain_test_rows, explainer_config, prepare_data, run_baseline, run_optimized,
    select_stage, train_stage, Evaluation, ExplainOutput, ModelRun, OptimizedRun, PreparedData, TrainedModel,
};

use crate::error::{Error, Result, Stage, StageContext};
use crate::evaluation::RocCurve;
use crate::selection::write_ranking;
use crate::shap::{write_explanations, ShapExplanation};

pub const BASELINE_NAME: &str = "baseline";
pub const OPTIMIZED_NAME: &str = "optimized";

/// Bars drawn in a per-instance chart.
const INSTANCE_CHART_FEATURES: usize = 20;

/// Wall-clock durations of a run, kept out of the deterministic artifacts.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub prepare_secs: f64,
    pub baseline_secs: f64,
    pub optimized_secs: f64,
    pub total_secs: f64,
}

/// Everything a `compare` run produces.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub config: RunConfig,
    pub data: PreparedData,
    pub baseline: ModelRun,
    pub optimized: OptimizedRun,
    /// Charted instances: (label text, explanation against the baseline).
    pub instance_explanations: Vec<(String, ShapExplanation)>,
    pub report: ComparisonReport,
    pub timings: Timings,
}

/// Runs the full experiment.
pub fn compare(cfg: &RunConfig) -> Result<Comparison> {
    let start = Instant::now();
    let data = prepare_data(cfg)?;
    let prepared = Instant::now();
    let baseline = run_baseline(cfg, &data)?;
    let baseline_done = Instant::now();
    let optimized = run_optimized(cfg, &data, &baseline.trained)?;
    let optimized_done = Instant::now();

    // One attack instance from the explained set and the first benign test row.
    let mut instance_explanations = Vec::new();
    if let Some(first) = optimized.explained.explanations.first() {
        instance_explanations.push(("attack".to_string(), first.clone()));
    }
    let labels = data.test.labels().unwrap_or_default();
    if let Some(benign_row) = labels.iter().position(|&l| l == 0) {
        let ex = explain_test_rows(
            cfg,
            &data,
            &baseline.trained.model,
            &baseline.trained.scaler,
            &optimized.explained.background,
            &[benign_row],
        )?;
        instance_explanations.extend(ex.into_iter().map(|e| ("benign".to_string(), e)));
    }

    let report = ComparisonReport {
        provenance: Provenance {
            seed: cfg.seed,
            config_hash: cfg.hash(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        baseline: ModelSummary::from_run(BASELINE_NAME, &baseline),
        optimized: ModelSummary::from_run(OPTIMIZED_NAME, &optimized.run),
        selected_features: optimized.selected.clone(),
        ranking: optimized.ranking.clone(),
        warnings: data.warnings.clone(),
    };
    let secs = |a: Instant, b: Instant| b.duration_since(a).as_secs_f64();
    let timings = Timings {
        prepare_secs: secs(start, prepared),
        baseline_secs: secs(prepared, baseline_done),
        optimized_secs: secs(baseline_done, optimized_done),
        total_secs: start.elapsed().as_secs_f64(),
    };
    Ok(Comparison {
        config: cfg.clone(),
        data,
        baseline,
        optimized,
        instance_explanations,
        report,
        timings,
    })
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Two-column `fpr  tpr` table of curve points.
pub fn roc_table(curve: &RocCurve) -> String {
    let mut out = String::from("fpr\ttpr\n");
    for p in &curve.points {
        let _ = writeln!(out, "{:?}\t{:?}", p.fpr, p.tpr);
    }
    out
}

/// Writes `report.json` and `report.txt`.
pub fn emit_report(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir).stage(Stage::Report)?;
    Ok(vec![
        write(dir, "report.json", report.to_json()?).stage(Stage::Report)?,
        write(dir, "report.txt", report.to_text()).stage(Stage::Report)?,
    ])
}

/// Writes `roc.svg`, `ranking.svg` and one `instance_<i>.svg` per charted
/// explanation.
pub fn emit_plots(
    curves: &[(&str, &RocCurve)],
    ranking: &crate::selection::FeatureRanking,
    top_k: usize,
    instances: &[(String, ShapExplanation)],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    ensure_dir(dir).stage(Stage::Report)?;
    let mut paths = vec![
        write(dir, "roc.svg", plot::roc_svg(curves)).stage(Stage::Report)?,
        write(dir, "ranking.svg", plot::ranking_svg(ranking, top_k)).stage(Stage::Report)?,
    ];
    for (label, e) in instances {
        let name = format!("instance_{}.svg", e.instance_index);
        paths.push(write(dir, &name, plot::instance_svg(e, label, INSTANCE_CHART_FEATURES)).stage(Stage::Report)?);
    }
    Ok(paths)
}

/// Writes every artifact of a comparison into `dir`.
pub fn emit_all(c: &Comparison, dir: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(dir).stage(Stage::Report)?;
    let mut paths = emit_report(&c.report, dir)?;
    let curves = [
        (BASELINE_NAME, &c.baseline.evaluation.roc),
        (OPTIMIZED_NAME, &c.optimized.run.evaluation.roc),
    ];
    paths.extend(emit_plots(
        &curves,
        &c.optimized.ranking,
        c.optimized.selected.len(),
        &c.instance_explanations,
        dir,
    )?);

    let path = dir.join("ranking.tsv");
    write_ranking(&c.optimized.ranking, &path).stage(Stage::Report)?;
    paths.push(path);
    let path = dir.join("explanations.tsv");
    write_explanations(&c.optimized.explained.explanations, &path).stage(Stage::Report)?;
    paths.push(path);
    for (name, curve) in curves {
        paths.push(write(dir, &format!("roc_{name}.tsv"), roc_table(curve)).stage(Stage::Report)?);
    }
    for (name, trained) in [
        (BASELINE_NAME, &c.baseline.trained),
        (OPTIMIZED_NAME, &c.optimized.run.trained),
    ] {
        let path = dir.join(format!("model_{name}.json"));
        trained.model.save(&path, Some(&trained.scaler)).stage(Stage::Report)?;
        paths.push(path);
    }
    let timings = serde_json::to_string_pretty(&c.timings).map_err(|e| Error::parse("timings", e))?;
    paths.push(write(dir, "timings.json", timings + "\n").stage(Stage::Report)?);
    Ok(paths)
}
