mod common;

use common::{gaussian_matrix, gradient_check, random_model, reference_forward, reference_re};
use shapsel_core::autoencoder::{train, AEConfig, AEModel};
use shapsel_core::data::{fit_standardize, synth_generate, SynthParams};
use shapsel_core::linalg::Matrix;

#[test]
fn gradients_match_central_differences_deep_net() {
    let model = random_model(3, &[4, 2, 4], 11);
    let batch = gaussian_matrix(16, 3, 12);
    let err = gradient_check(&model, &batch, 1e-5);
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn gradients_match_central_differences_single_hidden_layer() {
    let model = random_model(3, &[2], 21);
    let batch = gaussian_matrix(5, 3, 22);
    let err = gradient_check(&model, &batch, 1e-5);
    assert!(err <= 1e-4, "relative error {err}");
}

#[test]
fn gradients_match_on_single_row() {
    let model = random_model(5, &[6, 3, 6], 31);
    let batch = gaussian_matrix(1, 5, 32);
    assert!(gradient_check(&model, &batch, 1e-5) <= 1e-4);
}

#[test]
fn forward_matches_independent_reference() {
    let model = random_model(8, &[6, 3, 6], 5);
    let x = gaussian_matrix(20, 8, 6);
    let batched = model.forward_batch(&x).unwrap();
    let scores = model.score_rows(&x).unwrap();
    for r in 0..x.rows() {
        let expected = reference_forward(&model, x.row(r));
        for (a, b) in batched.row(r).iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-10);
        }
        assert!((scores[r] - reference_re(&model, x.row(r))).abs() <= 1e-10);
    }
}

#[test]
fn zero_weight_model_reconstructs_the_bias() {
    let cfg = AEConfig {
        hidden_layers: vec![2],
        ..AEConfig::default()
    };
    let weights = vec![Matrix::zeros(2, 2), Matrix::zeros(2, 2)];
    let biases = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
    let model = AEModel::from_parameters(cfg, weights, biases).unwrap();
    // ([1,1] - [1,0])^2 averaged over two dimensions
    assert_eq!(model.reconstruction_error(&[1.0, 1.0]).unwrap(), 0.5);
}

#[test]
fn trained_model_scores_attacks_higher() {
    let ds = synth_generate(&SynthParams {
        n_benign: 3000,
        n_attack: 300,
        n_features: 20,
        n_informative: 5,
        shift: 6.0,
        seed: 3,
    })
    .unwrap();
    let (scaled, _) = fit_standardize(&ds.rows_with_label(0)).unwrap();
    let train_rows: Vec<usize> = (0..2000).collect();
    let val_rows: Vec<usize> = (2000..3000).collect();
    let cfg = AEConfig {
        hidden_layers: vec![16, 8, 16],
        epochs: 30,
        learning_rate: 0.005,
        batch_size: 256,
        seed: 4,
        ..AEConfig::default()
    };
    let model = AEModel::init(&cfg, 20).unwrap();
    let (model, report) = train(
        &model,
        &scaled.take_rows(&train_rows),
        &scaled.take_rows(&val_rows),
        &cfg,
    )
    .unwrap();
    assert!(report.loss_history.last().unwrap() < report.loss_history.first().unwrap());

    let (_, scaler) = fit_standardize(&ds.rows_with_label(0)).unwrap();
    let all = shapsel_core::data::apply_standardize(&ds, &scaler).unwrap();
    let scores = model.score_batch(&all).unwrap();
    let labels = all.labels().unwrap();
    let mean = |class: u8| {
        let v: Vec<f64> = scores
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == class)
            .map(|(s, _)| *s)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(1) > mean(0), "attack {} vs benign {}", mean(1), mean(0));
}
