use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use shapsel_core::autoencoder::AEModel;
use shapsel_core::data::{synth_generate, write_dataset, SynthParams, LABEL_HEADER};
use shapsel_core::error::{Error, Result, Stage, StageContext};
use shapsel_core::pipeline::{
    self, emit_all, evaluate_stage, explain_stage, prepare_data, select_stage, train_stage, DataSource, RunConfig,
};
use shapsel_core::rng::derive_seed;
use shapsel_core::selection::{read_ranking, top_k, write_ranking};
use shapsel_core::shap::{read_explanations, write_explanations};

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "SHAPSEL_OUT";
const DEFAULT_OUT: &str = "shapsel-out";

/// Autoencoder anomaly detection with KernelSHAP feature selection.
#[derive(Parser, Debug)]
#[command(name = "shapsel", version, about)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; built-in synthetic defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $SHAPSEL_OUT, then the config, then ./shapsel-out).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Explain instances on one thread.
    #[arg(long, global = true)]
    serial: bool,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the configured synthetic dataset as train.csv, test.csv and data.toml.
    Synth,
    /// Train an autoencoder on benign flows (all features, or the top-k of a ranking).
    Train {
        /// Ranking TSV from `select`; trains on its top-k features.
        #[arg(long, value_name = "RANKING")]
        features: Option<PathBuf>,
        /// Number of ranked features to keep (default: config top_k).
        #[arg(long)]
        top_k: Option<usize>,
        /// Checkpoint path (default: <out>/model_baseline.json or model_optimized.json).
        #[arg(long, value_name = "FILE")]
        model_out: Option<PathBuf>,
    },
    /// Explain attack reconstruction errors of a trained model.
    Explain {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
    /// Rank features by mean |phi| and keep the top-k.
    Select {
        #[arg(long, value_name = "FILE")]
        explanations: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Score the test set and report ROC, optimal threshold and metrics.
    Evaluate {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
    },
    /// Run baseline and optimized detectors end to end and write the comparison.
    Compare,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path).stage(Stage::Config)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.serial {
        cfg.explainer.parallel = false;
    }
    cfg.out_dir = Some(out_dir(common, &cfg));
    cfg.validate().stage(Stage::Config)?;
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &RunConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>, stage: Stage) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e)).stage(stage)
}

fn load_model(path: &Path, stage: Stage) -> Result<(AEModel, shapsel_core::data::ScalerParams)> {
    let (model, scaler) = AEModel::load(path).stage(stage)?;
    let scaler = scaler
        .ok_or_else(|| Error::InvalidArgument(format!("{}: checkpoint carries no scaler", path.display())))
        .stage(stage)?;
    Ok((model, scaler))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    pipeline::ensure_dir(&out).stage(Stage::Report)?;

    match cli.command {
        Command::Synth => {
            let DataSource::Synth {
                n_train_benign,
                n_test_benign,
                n_attack,
                n_features,
                n_informative,
                shift,
            } = cfg.data
            else {
                return Err(Error::InvalidArgument("synth needs a synthetic data source".into())).stage(Stage::Config);
            };
            let all = synth_generate(&SynthParams {
                n_benign: n_train_benign + n_test_benign,
                n_attack,
                n_features,
                n_informative,
                shift,
                seed: derive_seed(cfg.seed, "synth"),
            })
            .stage(Stage::Ingest)?;
            let train: Vec<usize> = (0..n_train_benign).collect();
            let test: Vec<usize> = (n_train_benign..all.n_rows()).collect();
            write_dataset(&all.take_rows(&train).without_labels(), out.join("train.csv")).stage(Stage::Report)?;
            write_dataset(&all.take_rows(&test), out.join("test.csv")).stage(Stage::Report)?;
            let csv_cfg = RunConfig {
                data: DataSource::Csv {
                    train: "train.csv".into(),
                    test: "test.csv".into(),
                    label_column: LABEL_HEADER.into(),
                    benign_label: "0".into(),
                    max_train_rows: None,
                    max_test_benign: None,
                    max_test_attack: None,
                },
                out_dir: None,
                ..cfg
            };
            write_file(&out.join("data.toml"), csv_cfg.to_toml()?, Stage::Report)?;
            println!("wrote {}", out.display());
        }
        Command::Train {
            features,
            top_k: k,
            model_out,
        } => {
            let data = prepare_data(&cfg)?;
            let selected = match &features {
                Some(path) => {
                    let ranking = read_ranking(path).stage(Stage::Select)?;
                    let k = k.unwrap_or(cfg.top_k).min(ranking.len());
                    Some(top_k(&ranking, k).stage(Stage::Select)?)
                }
                None => None,
            };
            let trained = train_stage(&cfg, &data, selected.as_deref())?;
            let default_name = if features.is_some() {
                "model_optimized.json"
            } else {
                "model_baseline.json"
            };
            let path = model_out.unwrap_or_else(|| out.join(default_name));
            trained.model.save(&path, Some(&trained.scaler)).stage(Stage::Train)?;
            let r = &trained.report;
            println!(
                "trained on {} features, {} epochs, final loss {:.6}, validation MSE {:.6}",
                trained.model.input_dim,
                r.loss_history.len(),
                r.loss_history.last().copied().unwrap_or(f64::NAN),
                r.final_validation_mse
            );
            println!("wrote {}", path.display());
        }
        Command::Explain { model } => {
            let (model, scaler) = load_model(&model, Stage::Explain)?;
            let data = prepare_data(&cfg)?;
            let explained = explain_stage(&cfg, &data, &model, &scaler)?;
            let path = out.join("explanations.tsv");
            write_explanations(&explained.explanations, &path).stage(Stage::Explain)?;
            println!("explained {} instances", explained.explanations.len());
            println!("wrote {}", path.display());
        }
        Command::Select { explanations, top_k: k } => {
            let explanations = read_explanations(&explanations).stage(Stage::Select)?;
            let (ranking, selected) = select_stage(&explanations, k.unwrap_or(cfg.top_k))?;
            let path = out.join("ranking.tsv");
            write_ranking(&ranking, &path).stage(Stage::Select)?;
            write_file(&out.join("selected.txt"), selected.join("\n") + "\n", Stage::Select)?;
            println!("selected {} of {} features", selected.len(), ranking.len());
            println!("wrote {}", path.display());
        }
        Command::Evaluate { model } => {
            let stem = model.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            let stem = stem.strip_prefix("model_").unwrap_or(stem).to_string();
            let (model, scaler) = load_model(&model, Stage::Evaluate)?;
            let data = prepare_data(&cfg)?;
            let ev = evaluate_stage(&model, &scaler, &data.evaluation_set(cfg.exclude_background_from_test))?;
            let json = ev.to_json().stage(Stage::Evaluate)?;
            let path = out.join(format!("evaluation_{stem}.json"));
            write_file(&path, json, Stage::Evaluate)?;
            write_file(
                &out.join(format!("roc_{stem}.tsv")),
                pipeline::roc_table(&ev.roc),
                Stage::Evaluate,
            )?;
            println!(
                "AUC {:.4}, G-mean {:.4}, optimal threshold {:.4}\n",
                ev.roc.auc, ev.g_mean, ev.threshold
            );
            print!("{}", pipeline::classification_report(&ev.metrics));
            println!("wrote {}", path.display());
        }
        Command::Compare => {
            let comparison = pipeline::compare(&cfg)?;
            let paths = emit_all(&comparison, &out)?;
            info!("wrote {} files", paths.len());
            print!("{}", comparison.report.to_text());
            println!("\nwrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
