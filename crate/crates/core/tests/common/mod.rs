#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use shapsel_core::autoencoder::{AEConfig, AEModel};
use shapsel_core::linalg::Matrix;
use shapsel_core::rng::rng_from_seed;

pub fn config(hidden: &[usize], seed: u64) -> AEConfig {
    AEConfig {
        hidden_layers: hidden.to_vec(),
        seed,
        ..AEConfig::default()
    }
}

/// Glorot-initialized model whose biases are also randomized, so bias paths
/// are exercised.
pub fn random_model(d: usize, hidden: &[usize], seed: u64) -> AEModel {
    let mut model = AEModel::init(&config(hidden, seed), d).unwrap();
    let mut rng = rng_from_seed(seed ^ 0xb1a5);
    let mut params = model.flat_parameters();
    let mut offset = 0;
    for (w, b) in model.weights().iter().zip(model.biases()) {
        offset += w.as_slice().len();
        for p in &mut params[offset..offset + b.len()] {
            *p = rng.random_range(-0.3..0.3);
        }
        offset += b.len();
    }
    model.set_flat_parameters(&params).unwrap();
    model
}

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = rng_from_seed(seed);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// Straightforward forward pass written independently of the library.
pub fn reference_forward(model: &AEModel, x: &[f64]) -> Vec<f64> {
    let n = model.weights().len();
    let mut a = x.to_vec();
    for (l, (w, b)) in model.weights().iter().zip(model.biases()).enumerate() {
        let mut z = b.clone();
        for (j, zj) in z.iter_mut().enumerate() {
            for (i, ai) in a.iter().enumerate() {
                *zj += ai * w.get(i, j);
            }
        }
        if l + 1 < n {
            for v in &mut z {
                *v = v.max(0.0);
            }
        }
        a = z;
    }
    a
}

pub fn reference_re(model: &AEModel, x: &[f64]) -> f64 {
    let y = reference_forward(model, x);
    x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / x.len() as f64
}

/// Worst element-wise relative error of the analytic gradient against central
/// differences with step `h`; the denominator is floored at 1.
pub fn gradient_check(model: &AEModel, batch: &Matrix, h: f64) -> f64 {
    let (_, grads) = model.loss_and_gradients(batch).unwrap();
    let analytic = grads.flatten();
    let base = model.flat_parameters();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_flat_parameters(&p).unwrap();
        let up = probe.batch_loss(batch).unwrap();
        p[k] = base[k] - h;
        probe.set_flat_parameters(&p).unwrap();
        let down = probe.batch_loss(batch).unwrap();
        let numeric = (up - down) / (2.0 * h);
        let rel = (analytic[k] - numeric).abs() / 1f64.max(analytic[k].abs()).max(numeric.abs());
        worst = worst.max(rel);
    }
    worst
}
