mod common;

use common::{gaussian_matrix, random_model};
use shapsel_core::data::CleanDataset;
use shapsel_core::error::Error;
use shapsel_core::linalg::Matrix;
use shapsel_core::shap::{
    brute_force_shapley, enumerate_weighted, explain_batch, explain_instance, explain_rows, kernel_shap,
    kmeans_summarize, sample_coalitions, BackgroundSet, Coalition, CoalitionGame, ExplainMode, ExplainerConfig,
    LinearGame, ReconstructionGame,
};

fn exact() -> ExplainerConfig {
    ExplainerConfig {
        mode: ExplainMode::Exact,
        ..ExplainerConfig::default()
    }
}

fn sampled(budget: usize, seed: u64) -> ExplainerConfig {
    ExplainerConfig {
        mode: ExplainMode::Sampled,
        sample_budget: budget,
        seed,
        ..ExplainerConfig::default()
    }
}

/// Game defined by an arbitrary closure over coalitions.
struct FnGame<F: Fn(&Coalition) -> f64 + Sync> {
    d: usize,
    f: F,
}

impl<F: Fn(&Coalition) -> f64 + Sync> CoalitionGame for FnGame<F> {
    fn n_players(&self) -> usize {
        self.d
    }

    fn evaluate(&self, coalitions: &[Coalition]) -> shapsel_core::Result<Vec<f64>> {
        Ok(coalitions.iter().map(&self.f).collect())
    }
}

#[test]
fn kernel_matches_brute_force_on_autoencoder() {
    for (d, hidden) in [(4, vec![3]), (8, vec![6, 3, 6]), (10, vec![8, 4, 8])] {
        let model = random_model(d, &hidden, d as u64);
        let bg = BackgroundSet::uniform(&gaussian_matrix(4, d, 100 + d as u64)).unwrap();
        let xs = gaussian_matrix(3, d, 200 + d as u64);
        for r in 0..xs.rows() {
            let game = ReconstructionGame::new(&model, xs.row(r), &bg).unwrap();
            let oracle = brute_force_shapley(&game).unwrap();
            let e = explain_instance(&model, xs.row(r), &bg, &exact()).unwrap();
            for (a, b) in e.phi.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-6, "d={d}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn dummy_player_gets_zero() {
    // player 2 never changes the value
    let game = FnGame {
        d: 5,
        f: |s: &Coalition| {
            let m: Vec<usize> = s.members().filter(|&i| i != 2).collect();
            m.iter().map(|&i| (i + 1) as f64).product::<f64>() + m.len() as f64
        },
    };
    let sol = kernel_shap(&game, &enumerate_weighted(5).unwrap()).unwrap();
    assert!(sol.phi[2].abs() <= 1e-8, "{}", sol.phi[2]);
}

#[test]
fn symmetric_players_share_equally() {
    // value depends only on |S ∩ {0,1}| and on player 3
    let game = FnGame {
        d: 6,
        f: |s: &Coalition| {
            let k = s.contains(0) as u8 + s.contains(1) as u8;
            (k as f64).powi(3) + if s.contains(3) { 2.5 * k as f64 } else { 0.0 }
        },
    };
    let sol = kernel_shap(&game, &enumerate_weighted(6).unwrap()).unwrap();
    assert!((sol.phi[0] - sol.phi[1]).abs() <= 1e-8);
    let oracle = brute_force_shapley(&game).unwrap();
    for (a, b) in sol.phi.iter().zip(&oracle) {
        assert!((a - b).abs() <= 1e-9);
    }
}

#[test]
fn linear_game_has_closed_form() {
    let d = 10;
    let w: Vec<f64> = (0..d).map(|i| (i as f64 - 4.5) * 0.7).collect();
    let x = gaussian_matrix(1, d, 1).into_vec();
    let mean = gaussian_matrix(1, d, 2).into_vec();
    let game = LinearGame::new(&w, &x, &mean);
    let sol = kernel_shap(&game, &enumerate_weighted(d).unwrap()).unwrap();
    for i in 0..d {
        assert!((sol.phi[i] - w[i] * (x[i] - mean[i])).abs() <= 1e-9);
    }
}

#[test]
fn sampled_approximates_exact() {
    let d = 8;
    let model = random_model(d, &[6, 3, 6], 77);
    let bg = BackgroundSet::uniform(&gaussian_matrix(4, d, 78)).unwrap();
    let x = gaussian_matrix(1, d, 79).into_vec();
    let e = explain_instance(&model, &x, &bg, &exact()).unwrap();
    // budget 2000 exceeds 2^8, so sampling saturates to full enumeration
    let s = explain_instance(&model, &x, &bg, &sampled(2000, 5)).unwrap();
    for (a, b) in e.phi.iter().zip(&s.phi) {
        assert!((a - b).abs() <= 0.02);
    }
    // a real subsample still lands close
    let s = explain_instance(&model, &x, &bg, &sampled(120, 5)).unwrap();
    let scale = e.phi.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (a, b) in e.phi.iter().zip(&s.phi) {
        assert!((a - b).abs() <= 0.25 * scale.max(1e-3), "{a} vs {b}");
    }
}

#[test]
fn sampled_local_accuracy_at_thirty_features() {
    let d = 30;
    let model = random_model(d, &[12, 4, 12], 9);
    let bg = kmeans_summarize(&gaussian_matrix(40, d, 10), 5, 11).unwrap();
    let xs = gaussian_matrix(3, d, 12);
    let out = explain_rows(&model, &xs, &[0, 1, 2], &bg, &sampled(3000, 13)).unwrap();
    for e in out {
        assert!(e.local_accuracy_gap() <= 1e-3);
    }
}

#[test]
fn too_small_budget_is_singular() {
    let d = 30;
    let model = random_model(d, &[4], 1);
    let bg = BackgroundSet::uniform(&gaussian_matrix(2, d, 2)).unwrap();
    let x = gaussian_matrix(1, d, 3).into_vec();
    let err = explain_instance(&model, &x, &bg, &sampled(8, 0)).unwrap_err();
    assert!(matches!(err, Error::SingularSystem { .. }), "{err}");
}

#[test]
fn exact_mode_refuses_wide_inputs() {
    let d = 21;
    let model = random_model(d, &[4], 1);
    let bg = BackgroundSet::uniform(&gaussian_matrix(2, d, 2)).unwrap();
    let x = gaussian_matrix(1, d, 3).into_vec();
    assert!(matches!(
        explain_instance(&model, &x, &bg, &exact()),
        Err(Error::TooManyFeatures { .. })
    ));
}

#[test]
fn sampling_is_seeded() {
    let a = sample_coalitions(12, 500, 4).unwrap();
    let b = sample_coalitions(12, 500, 4).unwrap();
    let c = sample_coalitions(12, 500, 5).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn dataset(m: Matrix) -> CleanDataset {
    let names = (0..m.cols()).map(|i| format!("c{i}")).collect();
    CleanDataset::new(m, names, None).unwrap()
}

#[test]
fn batch_of_one_matches_single_instance() {
    let d = 6;
    let model = random_model(d, &[4, 2, 4], 3);
    let bg = BackgroundSet::uniform(&gaussian_matrix(3, d, 4)).unwrap();
    let xs = gaussian_matrix(1, d, 5);
    let batch = explain_batch(&model, &dataset(xs.clone()), &bg, &exact()).unwrap();
    let single = explain_instance(&model, xs.row(0), &bg, &exact()).unwrap();
    assert_eq!(batch.len(), 1);
    assert_eq!(batch[0].phi, single.phi);
}

#[test]
fn permuting_rows_permutes_explanations() {
    let d = 12;
    let model = random_model(d, &[8, 3, 8], 6);
    let bg = kmeans_summarize(&gaussian_matrix(30, d, 7), 4, 8).unwrap();
    let xs = gaussian_matrix(50, d, 9);
    let forward = explain_batch(&model, &dataset(xs.clone()), &bg, &exact()).unwrap();
    let order: Vec<usize> = (0..50).rev().collect();
    let reversed = explain_batch(&model, &dataset(xs.select_rows(&order)), &bg, &exact()).unwrap();
    for (i, e) in forward.iter().enumerate() {
        assert_eq!(e.phi, reversed[49 - i].phi);
        assert!(e.local_accuracy_gap() <= 1e-8);
    }
}

#[test]
fn parallel_and_serial_agree_bitwise() {
    let d = 25;
    let model = random_model(d, &[10, 4, 10], 14);
    let bg = kmeans_summarize(&gaussian_matrix(40, d, 15), 6, 16).unwrap();
    let xs = gaussian_matrix(8, d, 17);
    let idx: Vec<usize> = (100..108).collect();
    let mut cfg = sampled(900, 18);
    cfg.parallel = true;
    let par = explain_rows(&model, &xs, &idx, &bg, &cfg).unwrap();
    cfg.parallel = false;
    let ser = explain_rows(&model, &xs, &idx, &bg, &cfg).unwrap();
    assert_eq!(par, ser);
}

#[test]
fn weighted_background_equals_repeated_points() {
    let d = 5;
    let model = random_model(d, &[4], 19);
    let pts = gaussian_matrix(2, d, 20);
    let repeated = pts.select_rows(&[0, 0, 0, 1]);
    let weighted = BackgroundSet::new(pts, vec![0.75, 0.25], 4).unwrap();
    let x = gaussian_matrix(1, d, 21).into_vec();
    let a = explain_instance(&model, &x, &weighted, &exact()).unwrap();
    let b = explain_instance(&model, &x, &BackgroundSet::uniform(&repeated).unwrap(), &exact()).unwrap();
    for (p, q) in a.phi.iter().zip(&b.phi) {
        assert!((p - q).abs() <= 1e-12);
    }
}
