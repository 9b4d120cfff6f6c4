use log::{info, warn};
use rand::seq::index;
use serde::Serialize;

use crate::autoencoder::{train, AEConfig, AEModel, TrainReport};
use crate::data::{
    apply_standardize, clean, fit_standardize, load_csv, select_columns, split, synth_generate, CleanDataset,
    LabelSpec, ScalerParams, SynthParams,
};
use crate::error::{Error, Result, Stage, StageContext};
use crate::evaluation::{classify, confusion, metrics, optimal_threshold, roc, MetricsReport, RocCurve};
use crate::rng::{derive_seed, rng_from_seed};
use crate::selection::{aggregate, top_k, FeatureRanking};
use crate::shap::{
    explain_rows, kmeans_summarize, BackgroundSet, ExplainMode, ExplainerConfig, ShapExplanation, EXACT_LIMIT,
};

use super::config::{DataSource, RunConfig};

/// Cleaned (unscaled) data for one run, plus which attack rows feed the
/// explainer.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// Benign training flows; split into train/validation per model.
    pub train_benign: CleanDataset,
    /// Labelled evaluation flows.
    pub test: CleanDataset,
    /// Rows of `test` forming the SHAP background source.
    pub background_rows: Vec<usize>,
    /// Rows of `test` whose explanations are aggregated.
    pub explain_rows: Vec<usize>,
    pub warnings: Vec<String>,
}

impl PreparedData {
    /// Test rows used for scoring both detectors.
    pub fn evaluation_set(&self, exclude_background: bool) -> CleanDataset {
        if !exclude_background {
            return self.test.clone();
        }
        let keep: Vec<usize> = (0..self.test.n_rows())
            .filter(|i| self.background_rows.binary_search(i).is_err())
            .collect();
        self.test.take_rows(&keep)
    }
}

/// Seeded sample of `k` of `candidates` (all of them when `k` is larger),
/// returned in ascending order.
fn sample_sorted(candidates: &[usize], k: usize, seed: u64) -> Vec<usize> {
    let mut picked: Vec<usize> = if k >= candidates.len() {
        candidates.to_vec()
    } else {
        index::sample(&mut rng_from_seed(seed), candidates.len(), k)
            .into_iter()
            .map(|i| candidates[i])
            .collect()
    };
    picked.sort_unstable();
    picked
}

fn cap_rows(ds: &CleanDataset, cap: Option<usize>, seed: u64) -> CleanDataset {
    match cap {
        Some(cap) if cap < ds.n_rows() => {
            let all: Vec<usize> = (0..ds.n_rows()).collect();
            ds.take_rows(&sample_sorted(&all, cap, seed))
        }
        _ => ds.clone(),
    }
}

/// Loads or generates the run's data and picks the background and explained
/// attack rows.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    cfg.validate().stage(Stage::Config)?;
    let mut warnings = Vec::new();
    let (train_benign, test) = match &cfg.data {
        DataSource::Synth {
            n_train_benign,
            n_test_benign,
            n_attack,
            n_features,
            n_informative,
            shift,
        } => {
            let all = synth_generate(&SynthParams {
                n_benign: n_train_benign + n_test_benign,
                n_attack: *n_attack,
                n_features: *n_features,
                n_informative: *n_informative,
                shift: *shift,
                seed: derive_seed(cfg.seed, "synth"),
            })
            .stage(Stage::Ingest)?;
            let train_idx: Vec<usize> = (0..*n_train_benign).collect();
            let test_idx: Vec<usize> = (*n_train_benign..all.n_rows()).collect();
            (all.take_rows(&train_idx).without_labels(), all.take_rows(&test_idx))
        }
        DataSource::Csv {
            train,
            test,
            label_column,
            benign_label,
            max_train_rows,
            max_test_benign,
            max_test_attack,
        } => {
            let spec = LabelSpec::new(label_column.clone(), benign_label.clone());
            let raw_train = load_csv(train, None).stage(Stage::Ingest)?;
            let train_has_labels = raw_train.column_names.contains(label_column);
            let raw_train = if train_has_labels {
                load_csv(train, Some(&spec)).stage(Stage::Ingest)?
            } else {
                raw_train
            };
            let mut train_ds = clean(&raw_train).stage(Stage::Ingest)?;
            if train_has_labels {
                let attacks = train_ds.labels().map_or(0, |l| l.iter().filter(|&&v| v == 1).count());
                if attacks > 0 {
                    let msg = format!("dropped {attacks} non-benign rows from the training file");
                    warn!("{msg}");
                    warnings.push(msg);
                }
                train_ds = train_ds.rows_with_label(0).without_labels();
            }
            let train_ds = cap_rows(&train_ds, *max_train_rows, derive_seed(cfg.seed, "cap-train"));

            let test_ds = clean(&load_csv(test, Some(&spec)).stage(Stage::Ingest)?).stage(Stage::Ingest)?;
            let test_ds = select_columns(&test_ds, train_ds.feature_names()).stage(Stage::Ingest)?;
            let benign = cap_rows(
                &test_ds.rows_with_label(0),
                *max_test_benign,
                derive_seed(cfg.seed, "cap-benign"),
            );
            let attack = cap_rows(
                &test_ds.rows_with_label(1),
                *max_test_attack,
                derive_seed(cfg.seed, "cap-attack"),
            );
            warnings.extend(train_ds.meta.warnings.iter().cloned());
            warnings.extend(test_ds.meta.warnings.iter().cloned());
            (train_ds, benign.concat(&attack).stage(Stage::Ingest)?)
        }
    };

    let labels = test
        .labels()
        .ok_or_else(|| Error::InvalidArgument("test data has no labels".into()))
        .stage(Stage::Ingest)?;
    let attack_rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    if attack_rows.is_empty() {
        return Err(Error::InvalidArgument("test data has no attack rows".into())).stage(Stage::Ingest);
    }
    if attack_rows.len() < cfg.background_size {
        let msg = format!(
            "only {} attack rows available for a background of {}; using all",
            attack_rows.len(),
            cfg.background_size
        );
        warn!("{msg}");
        warnings.push(msg);
    }
    let background_rows = sample_sorted(&attack_rows, cfg.background_size, derive_seed(cfg.seed, "background"));
    let explain_rows = match cfg.explain_count {
        None => background_rows.clone(),
        Some(n) => sample_sorted(&attack_rows, n, derive_seed(cfg.seed, "explain")),
    };
    info!(
        "data: {} benign training rows, {} test rows ({} attacks), {} features",
        train_benign.n_rows(),
        test.n_rows(),
        attack_rows.len(),
        train_benign.n_features()
    );
    Ok(PreparedData {
        train_benign,
        test,
        background_rows,
        explain_rows,
        warnings,
    })
}

/// A trained detector with the scaler it expects.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: AEModel,
    pub scaler: ScalerParams,
    pub report: TrainReport,
}

/// Fits the scaler on the benign training rows, splits train/validation and
/// trains an autoencoder on `features` (all features when `None`).
pub fn train_stage(cfg: &RunConfig, data: &PreparedData, features: Option<&[String]>) -> Result<TrainedModel> {
    let benign = match features {
        Some(names) => {
            // Keep dataset column order so that selecting every feature
            // reproduces the baseline model exactly.
            let all = data.train_benign.feature_names();
            let mut ordered: Vec<(usize, &String)> = names
                .iter()
                .map(|n| (all.iter().position(|a| a == n).unwrap_or(usize::MAX), n))
                .collect();
            ordered.sort_by_key(|&(i, _)| i);
            let ordered: Vec<&String> = ordered.into_iter().map(|(_, n)| n).collect();
            select_columns(&data.train_benign, &ordered).stage(Stage::Train)?
        }
        None => data.train_benign.clone(),
    };
    let (scaled, scaler) = fit_standardize(&benign).stage(Stage::Train)?;
    let (train_part, val_part) =
        split(&scaled, cfg.split_fraction, derive_seed(cfg.seed, "split")).stage(Stage::Train)?;
    let ae: AEConfig = cfg.autoencoder_config();
    let mut model = AEModel::init(&ae, scaled.n_features()).stage(Stage::Train)?;
    model.feature_names = scaled.feature_names().to_vec();
    info!(
        "training on {} rows x {} features ({} validation rows)",
        train_part.n_rows(),
        train_part.n_features(),
        val_part.n_rows()
    );
    let (model, report) = train(&model, &train_part, &val_part, &ae).stage(Stage::Train)?;
    Ok(TrainedModel { model, scaler, report })
}

/// Scales `ds` for `model` using the model's own feature names.
fn model_view(ds: &CleanDataset, model: &AEModel, scaler: &ScalerParams) -> Result<CleanDataset> {
    let selected = select_columns(ds, &model.feature_names)?;
    apply_standardize(&selected, scaler)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub roc: RocCurve,
    pub threshold: f64,
    pub g_mean: f64,
    pub metrics: MetricsReport,
}

impl Evaluation {
    /// Summary without the per-row scores or the curve (whose +inf sentinel
    /// has no JSON form).
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            auc: f64,
            threshold: f64,
            g_mean: f64,
            metrics: &'a MetricsReport,
        }
        let summary = Summary {
            auc: self.roc.auc,
            threshold: self.threshold,
            g_mean: self.g_mean,
            metrics: &self.metrics,
        };
        serde_json::to_string_pretty(&summary)
            .map(|s| s + "\n")
            .map_err(|e| Error::parse("evaluation", e))
    }
}

/// Scores `test` and reports ROC, the G-mean-optimal threshold and the
/// metrics at that threshold.
pub fn evaluate_stage(model: &AEModel, scaler: &ScalerParams, test: &CleanDataset) -> Result<Evaluation> {
    let view = model_view(test, model, scaler).stage(Stage::Evaluate)?;
    let labels = view
        .labels()
        .ok_or_else(|| Error::InvalidArgument("evaluation data has no labels".into()))
        .stage(Stage::Evaluate)?
        .to_vec();
    let scores = model.score_batch(&view).stage(Stage::Evaluate)?;
    let curve = roc(&labels, &scores).stage(Stage::Evaluate)?;
    let (threshold, g_mean) = optimal_threshold(&curve).stage(Stage::Evaluate)?;
    let cm = confusion(&labels, &classify(&scores, threshold)).stage(Stage::Evaluate)?;
    let metrics = metrics(&cm).stage(Stage::Evaluate)?;
    Ok(Evaluation {
        scores,
        labels,
        roc: curve,
        threshold,
        g_mean,
        metrics,
    })
}

/// Explainer settings for `d` features.
pub fn explainer_config(cfg: &RunConfig, d: usize) -> ExplainerConfig {
    let mode = cfg.explainer.mode.unwrap_or(if d > EXACT_LIMIT {
        ExplainMode::Sampled
    } else {
        ExplainMode::Exact
    });
    ExplainerConfig {
        mode,
        sample_budget: cfg.explainer.sample_budget.unwrap_or(2 * d + 2048),
        kmeans_k: cfg.explainer.kmeans_k,
        seed: derive_seed(cfg.seed, "explainer"),
        parallel: cfg.explainer.parallel,
        ..ExplainerConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct ExplainOutput {
    pub background: BackgroundSet,
    pub explanations: Vec<ShapExplanation>,
}

/// Summarizes the background attack rows with k-means and explains the
/// selected attack rows against `model`. Explanations carry test-row indices.
pub fn explain_stage(
    cfg: &RunConfig,
    data: &PreparedData,
    model: &AEModel,
    scaler: &ScalerParams,
) -> Result<ExplainOutput> {
    let view = model_view(&data.test, model, scaler).stage(Stage::Explain)?;
    let background = background_set(cfg, &view, &data.background_rows)?;
    let ecfg = explainer_config(cfg, model.input_dim);
    let rows = view.features().select_rows(&data.explain_rows);
    info!(
        "explaining {} instances ({:?} mode, background of {} centroids)",
        rows.rows(),
        ecfg.mode,
        background.len()
    );
    let explanations = explain_rows(model, &rows, &data.explain_rows, &background, &ecfg).stage(Stage::Explain)?;
    Ok(ExplainOutput {
        background,
        explanations,
    })
}

fn background_set(cfg: &RunConfig, view: &CleanDataset, rows: &[usize]) -> Result<BackgroundSet> {
    let source = view.features().select_rows(rows);
    let k = cfg.explainer.kmeans_k.min(source.rows());
    kmeans_summarize(&source, k, derive_seed(cfg.seed, "kmeans")).stage(Stage::Explain)
}

/// Explains arbitrary test rows (used for per-instance plots).
pub fn explain_test_rows(
    cfg: &RunConfig,
    data: &PreparedData,
    model: &AEModel,
    scaler: &ScalerParams,
    background: &BackgroundSet,
    rows: &[usize],
) -> Result<Vec<ShapExplanation>> {
    let view = model_view(&data.test, model, scaler).stage(Stage::Explain)?;
    let ecfg = explainer_config(cfg, model.input_dim);
    explain_rows(model, &view.features().select_rows(rows), rows, background, &ecfg).stage(Stage::Explain)
}

/// Ranks features and keeps the top `k` (capped at the feature count).
pub fn select_stage(explanations: &[ShapExplanation], k: usize) -> Result<(FeatureRanking, Vec<String>)> {
    let ranking = aggregate(explanations).stage(Stage::Select)?;
    let k = k.min(ranking.len());
    let names = top_k(&ranking, k).stage(Stage::Select)?;
    Ok((ranking, names))
}

/// One detector's end-to-end result.
#[derive(Debug, Clone)]
pub struct ModelRun {
    pub trained: TrainedModel,
    pub evaluation: Evaluation,
}

pub fn run_baseline(cfg: &RunConfig, data: &PreparedData) -> Result<ModelRun> {
    let trained = train_stage(cfg, data, None)?;
    let evaluation = evaluate_stage(
        &trained.model,
        &trained.scaler,
        &data.evaluation_set(cfg.exclude_background_from_test),
    )?;
    info!(
        "baseline: AUC {:.4}, threshold {:.4}",
        evaluation.roc.auc, evaluation.threshold
    );
    Ok(ModelRun { trained, evaluation })
}

#[derive(Debug, Clone)]
pub struct OptimizedRun {
    pub explained: ExplainOutput,
    pub ranking: FeatureRanking,
    pub selected: Vec<String>,
    pub run: ModelRun,
}

pub fn run_optimized(cfg: &RunConfig, data: &PreparedData, baseline: &TrainedModel) -> Result<OptimizedRun> {
    let explained = explain_stage(cfg, data, &baseline.model, &baseline.scaler)?;
    let (ranking, selected) = select_stage(&explained.explanations, cfg.top_k)?;
    let trained = train_stage(cfg, data, Some(&selected))?;
    let evaluation = evaluate_stage(
        &trained.model,
        &trained.scaler,
        &data.evaluation_set(cfg.exclude_background_from_test),
    )?;
    info!(
        "optimized: AUC {:.4}, threshold {:.4}",
        evaluation.roc.auc, evaluation.threshold
    );
    Ok(OptimizedRun {
        explained,
        ranking,
        selected,
        run: ModelRun { trained, evaluation },
    })
}
