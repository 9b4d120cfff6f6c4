use std::fs;
use std::path::Path;

use shapsel_core::autoencoder::AEConfig;
use shapsel_core::data::{synth_generate, write_dataset, SynthParams};
use shapsel_core::evaluation::roc;
use shapsel_core::pipeline::{
    compare, emit_all, plot, prepare_data, ComparisonReport, DataSource, ExplainSettings, RunConfig,
};
use shapsel_core::selection::read_ranking;
use shapsel_core::shap::read_explanations;

fn small_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        data: DataSource::Synth {
            n_train_benign: 600,
            n_test_benign: 200,
            n_attack: 60,
            n_features: 12,
            n_informative: 4,
            shift: 6.0,
        },
        autoencoder: AEConfig {
            hidden_layers: vec![8, 4, 8],
            epochs: 20,
            learning_rate: 0.01,
            batch_size: 128,
            ..AEConfig::default()
        },
        explainer: ExplainSettings {
            kmeans_k: 5,
            ..ExplainSettings::default()
        },
        background_size: 30,
        top_k: 6,
        ..RunConfig::default()
    }
}

/// Distance from the benign mean, a model-free anomaly score.
fn distance_auc(shift: f64, informative: usize) -> f64 {
    let ds = synth_generate(&SynthParams {
        n_benign: 1000,
        n_attack: 200,
        n_features: 10,
        n_informative: informative,
        shift,
        seed: 8,
    })
    .unwrap();
    let benign = ds.rows_with_label(0);
    let d = ds.n_features();
    let mean: Vec<f64> = (0..d)
        .map(|c| benign.features().column(c).iter().sum::<f64>() / benign.n_rows() as f64)
        .collect();
    let sd: Vec<f64> = (0..d)
        .map(|c| {
            let col = benign.features().column(c);
            (col.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>() / col.len() as f64).sqrt()
        })
        .collect();
    let scores: Vec<f64> = (0..ds.n_rows())
        .map(|r| {
            ds.row(r)
                .iter()
                .enumerate()
                .map(|(c, v)| ((v - mean[c]) / sd[c]).powi(2))
                .sum()
        })
        .collect();
    roc(ds.labels().unwrap(), &scores).unwrap().auc
}

#[test]
fn synthetic_separation_follows_shift() {
    assert_eq!(distance_auc(10.0, 10), 1.0);
    let null = distance_auc(0.0, 10);
    assert!((null - 0.5).abs() < 0.06, "{null}");
}

fn files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn compare_emits_consistent_artifacts() {
    let cfg = small_config(3);
    let c = compare(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_all(&c, dir.path()).unwrap();
    let names = files(dir.path());
    for required in [
        "report.json",
        "report.txt",
        "roc.svg",
        "ranking.svg",
        "ranking.tsv",
        "explanations.tsv",
    ] {
        assert!(names.iter().any(|n| n == required), "missing {required}");
    }
    assert_eq!(names.iter().filter(|n| n.starts_with("instance_")).count(), 2);

    let report = ComparisonReport::read(dir.path().join("report.json")).unwrap();
    assert_eq!(report, c.report);
    assert_eq!(report.optimized.feature_count, cfg.top_k);
    assert_eq!(report.baseline.feature_count, 12);
    assert_eq!(report.selected_features.len(), cfg.top_k);
    assert_eq!(
        c.optimized.run.trained.model.config.hidden_layers,
        c.baseline.trained.model.config.hidden_layers
    );

    for m in [&report.baseline, &report.optimized] {
        let r = &m.metrics;
        let (n0, n1) = (r.class_0.support as f64, r.class_1.support as f64);
        let weighted = |a: f64, b: f64| (a * n0 + b * n1) / (n0 + n1);
        assert!((r.weighted_avg.precision - weighted(r.class_0.precision, r.class_1.precision)).abs() <= 1e-9);
        assert!((r.weighted_avg.recall - weighted(r.class_0.recall, r.class_1.recall)).abs() <= 1e-9);
        assert!((r.weighted_avg.f1 - weighted(r.class_0.f1, r.class_1.f1)).abs() <= 1e-9);
        assert!((r.macro_avg.f1 - (r.class_0.f1 + r.class_1.f1) / 2.0).abs() <= 1e-12);
        assert!(m.auc.is_finite() && m.g_mean.is_finite() && m.optimal_threshold.is_finite());
    }

    let roc_svg = fs::read_to_string(dir.path().join("roc.svg")).unwrap();
    assert_eq!(roc_svg.matches("<polyline").count(), 2);

    let ranking_svg = fs::read_to_string(dir.path().join("ranking.svg")).unwrap();
    let ranks: Vec<usize> = ranking_svg
        .split("data-rank=\"")
        .skip(1)
        .map(|s| s[..s.find('"').unwrap()].parse().unwrap())
        .collect();
    assert_eq!(ranks, (1..=cfg.top_k).collect::<Vec<_>>());

    let explained = &c.instance_explanations[0].1;
    let chart = plot::instance_svg(explained, "attack", 12);
    let pos = chart.matches("contribution pos").count();
    let neg = chart.matches("contribution neg").count();
    assert_eq!(pos, explained.phi.iter().filter(|&&p| p >= 0.0).count());
    assert_eq!(neg, explained.phi.iter().filter(|&&p| p < 0.0).count());

    let ranking = read_ranking(dir.path().join("ranking.tsv")).unwrap();
    assert_eq!(ranking.entries, c.optimized.ranking.entries);
    let ex = read_explanations(dir.path().join("explanations.tsv")).unwrap();
    assert_eq!(ex, c.optimized.explained.explanations);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cfg = small_config(5);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit_all(&compare(&cfg).unwrap(), a.path()).unwrap();
    let serial = RunConfig {
        explainer: ExplainSettings {
            parallel: false,
            ..cfg.explainer.clone()
        },
        ..cfg.clone()
    };
    let serial_run = compare(&serial).unwrap();
    emit_all(&serial_run, b.path()).unwrap();
    for name in files(a.path()) {
        if name == "timings.json" || name == "report.json" || name == "report.txt" {
            continue;
        }
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name}"
        );
    }
    // reports differ only by the config hash
    let ra = ComparisonReport::read(a.path().join("report.json")).unwrap();
    let mut rb = serial_run.report.clone();
    rb.provenance.config_hash = ra.provenance.config_hash.clone();
    assert_eq!(ra, rb);

    let c = tempfile::tempdir().unwrap();
    emit_all(&compare(&cfg).unwrap(), c.path()).unwrap();
    for name in files(a.path()).into_iter().filter(|n| n != "timings.json") {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(c.path().join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn selecting_every_feature_reproduces_the_baseline() {
    let cfg = RunConfig {
        top_k: 12,
        ..small_config(7)
    };
    let c = compare(&cfg).unwrap();
    assert_eq!(c.optimized.run.trained.model, c.baseline.trained.model);
    assert_eq!(c.optimized.run.evaluation, c.baseline.evaluation);
}

#[test]
fn csv_source_matches_synthetic_source() {
    let cfg = small_config(9);
    let synth = prepare_data(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&synth.train_benign, dir.path().join("train.csv")).unwrap();
    write_dataset(&synth.test, dir.path().join("test.csv")).unwrap();
    let csv_cfg = RunConfig {
        data: DataSource::Csv {
            train: dir.path().join("train.csv"),
            test: dir.path().join("test.csv"),
            label_column: "label".into(),
            benign_label: "0".into(),
            max_train_rows: None,
            max_test_benign: None,
            max_test_attack: None,
        },
        ..cfg
    };
    let from_csv = prepare_data(&csv_cfg).unwrap();
    assert_eq!(from_csv.train_benign.features(), synth.train_benign.features());
    assert_eq!(from_csv.test.features(), synth.test.features());
    assert_eq!(from_csv.test.labels(), synth.test.labels());
    assert_eq!(from_csv.background_rows, synth.background_rows);
}

#[test]
fn missing_csv_names_the_path_and_stage() {
    let cfg = RunConfig {
        data: DataSource::Csv {
            train: "/nonexistent/train.csv".into(),
            test: "/nonexistent/test.csv".into(),
            label_column: "Label".into(),
            benign_label: "BENIGN".into(),
            max_train_rows: None,
            max_test_benign: None,
            max_test_attack: None,
        },
        ..RunConfig::default()
    };
    let msg = prepare_data(&cfg).unwrap_err().to_string();
    assert!(msg.starts_with("ingest"), "{msg}");
    assert!(msg.contains("/nonexistent/train.csv"), "{msg}");
}

#[test]
fn small_attack_pool_warns_and_uses_everything() {
    let cfg = RunConfig {
        background_size: 500,
        ..small_config(2)
    };
    let data = prepare_data(&cfg).unwrap();
    assert_eq!(data.background_rows.len(), 60);
    assert!(data.warnings.iter().any(|w| w.contains("60 attack rows")));
}
