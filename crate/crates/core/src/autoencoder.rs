//! Fully-connected reconstruction autoencoder trained with mini-batch Adam on
//! mean squared reconstruction error.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{CleanDataset, ScalerParams};
use crate::error::{Error, Result};
use crate::linalg::{affine, Matrix};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HiddenActivation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    #[default]
    Linear,
}

/// Adam decay constants.
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AEConfig {
    pub hidden_layers: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub hidden_activation: HiddenActivation,
    pub output_activation: OutputActivation,
    pub seed: u64,
}

impl Default for AEConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![50, 20, 8, 20, 50],
            epochs: 100,
            learning_rate: 0.001,
            batch_size: 8192,
            hidden_activation: HiddenActivation::Relu,
            output_activation: OutputActivation::Linear,
            seed: 0,
        }
    }
}

impl AEConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(Error::InvalidArgument(
                "hidden_layers must be non-empty and positive".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        Ok(())
    }

    /// Index of the narrowest hidden layer (first one on ties).
    pub fn bottleneck(&self) -> Option<usize> {
        let min = *self.hidden_layers.iter().min()?;
        self.hidden_layers.iter().position(|&w| w == min)
    }
}

/// Layer parameters plus the configuration they were built from. Weights are
/// stored `[fan_in × fan_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AEModel {
    pub config: AEConfig,
    pub input_dim: usize,
    #[serde(default)]
    pub feature_names: Vec<String>,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub final_validation_mse: f64,
}

/// Per-parameter gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    /// Flattened in the same order as [`AEModel::flat_parameters`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

impl AEModel {
    /// Glorot-uniform weights, zero biases, seeded from `config.seed`.
    pub fn init(config: &AEConfig, input_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be at least 1".into()));
        }
        let mut rng = rng_from_seed(derive_seed(config.seed, "autoencoder-init"));
        let widths: Vec<usize> = std::iter::once(input_dim)
            .chain(config.hidden_layers.iter().copied())
            .chain(std::iter::once(input_dim))
            .collect();
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_in, fan_out);
            for v in w.as_mut_slice() {
                *v = rng.random_range(-limit..limit);
            }
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            config: config.clone(),
            input_dim,
            feature_names: Vec::new(),
            weights,
            biases,
        })
    }

    /// Builds a model from explicit parameters, checking the layer chain.
    pub fn from_parameters(config: AEConfig, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        let input_dim = weights.first().map_or(0, Matrix::rows);
        let model = Self {
            config,
            input_dim,
            feature_names: Vec::new(),
            weights,
            biases,
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.weights.len() != self.config.hidden_layers.len() + 1 || self.biases.len() != self.weights.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} layers, found {}",
                self.config.hidden_layers.len() + 1,
                self.weights.len()
            )));
        }
        let mut width = self.input_dim;
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let out = self.config.hidden_layers.get(i).copied().unwrap_or(self.input_dim);
            if w.shape() != (width, out) || b.len() != out {
                return Err(Error::InvalidArgument(format!(
                    "layer {i} has shape {:?}, expected ({width}, {out})",
                    w.shape()
                )));
            }
            width = out;
        }
        if !self.weights.iter().all(Matrix::is_finite) || !self.biases.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("model parameters must be finite".into()));
        }
        Ok(())
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Vec<f64>] {
        &self.biases
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_parameters(&self) -> usize {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.as_slice().len() + b.len())
            .sum()
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_parameters() {
            return Err(Error::Dimension {
                expected: self.n_parameters(),
                actual: params.len(),
            });
        }
        let mut rest = params;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (head, tail) = rest.split_at(w.as_slice().len());
            w.as_mut_slice().copy_from_slice(head);
            let (head, tail) = tail.split_at(b.len());
            b.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn is_output(&self, layer: usize) -> bool {
        layer + 1 == self.weights.len()
    }

    /// Reconstructs every row of `batch`.
    pub fn forward_batch(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: batch.cols(),
            });
        }
        let mut act = affine(batch, &self.weights[0], &self.biases[0]);
        for layer in 0..self.weights.len() {
            if layer > 0 {
                act = affine(&act, &self.weights[layer], &self.biases[layer]);
            }
            if !self.is_output(layer) {
                relu_in_place(act.as_mut_slice());
            }
            if !act.is_finite() {
                return Err(Error::NumericalBlowUp { layer });
            }
        }
        Ok(act)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&batch)?.into_vec())
    }

    /// Mean squared difference between `x` and its reconstruction.
    pub fn reconstruction_error(&self, x: &[f64]) -> Result<f64> {
        let recon = self.forward(x)?;
        Ok(mean_squared_residual(x, &recon))
    }

    /// Reconstruction error of every row.
    pub fn score_rows(&self, rows: &Matrix) -> Result<Vec<f64>> {
        const CHUNK: usize = 4096;
        let mut scores = Vec::with_capacity(rows.rows());
        let indices: Vec<usize> = (0..rows.rows()).collect();
        for chunk in indices.chunks(CHUNK) {
            let batch = if chunk.len() == rows.rows() {
                rows.clone()
            } else {
                rows.select_rows(chunk)
            };
            let recon = self.forward_batch(&batch)?;
            scores.extend(
                batch
                    .row_iter()
                    .zip(recon.row_iter())
                    .map(|(x, r)| mean_squared_residual(x, r)),
            );
        }
        Ok(scores)
    }

    pub fn score_batch(&self, ds: &CleanDataset) -> Result<Vec<f64>> {
        self.score_rows(ds.features())
    }

    /// Mean over rows of the per-row reconstruction error.
    pub fn batch_loss(&self, batch: &Matrix) -> Result<f64> {
        let recon = self.forward_batch(batch)?;
        Ok(batch_mse(batch, &recon))
    }

    /// Loss of `batch` and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, batch: &Matrix) -> Result<(f64, Gradients)> {
        if batch.cols() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                actual: batch.cols(),
            });
        }
        // activations[0] is the input; activations[l + 1] is layer l's output.
        let mut activations = Vec::with_capacity(self.weights.len() + 1);
        activations.push(batch.clone());
        for layer in 0..self.weights.len() {
            let mut a = affine(&activations[layer], &self.weights[layer], &self.biases[layer]);
            if !self.is_output(layer) {
                relu_in_place(a.as_mut_slice());
            }
            if !a.is_finite() {
                return Err(Error::NumericalBlowUp { layer });
            }
            activations.push(a);
        }
        let output = activations.last().expect("at least one layer");
        let loss = batch_mse(batch, output);

        let scale = 2.0 / (batch.rows() * self.input_dim) as f64;
        let mut delta = output.clone();
        for (d, x) in delta.as_mut_slice().iter_mut().zip(batch.as_slice()) {
            *d = (*d - x) * scale;
        }

        let n = self.weights.len();
        let mut grad_w = vec![Matrix::zeros(0, 0); n];
        let mut grad_b = vec![Vec::new(); n];
        for layer in (0..n).rev() {
            let input = &activations[layer];
            grad_w[layer] = transpose_times(input, &delta);
            grad_b[layer] = column_sums(&delta);
            if layer > 0 {
                let mut prev = times_transpose(&delta, &self.weights[layer]);
                // ReLU derivative: activations of hidden layers are zero exactly where z <= 0.
                for (p, a) in prev.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    if *a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok((
            loss,
            Gradients {
                weights: grad_w,
                biases: grad_b,
            },
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>, scaler: Option<&ScalerParams>) -> Result<()> {
        let path = path.as_ref();
        let ckpt = CheckpointRef {
            format: CHECKPOINT_FORMAT,
            version: CHECKPOINT_VERSION,
            scaler,
            model: self,
        };
        let json = serde_json::to_string(&ckpt).map_err(|e| Error::parse("checkpoint", e))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(AEModel, Option<ScalerParams>)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::parse("checkpoint", e))?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                "checkpoint",
                format!("unsupported format {} v{}", ckpt.format, ckpt.version),
            ));
        }
        ckpt.model.check_shapes()?;
        Ok((ckpt.model, ckpt.scaler))
    }
}

const CHECKPOINT_FORMAT: &str = "shapsel-autoencoder";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize)]
struct CheckpointRef<'a> {
    format: &'a str,
    version: u32,
    scaler: Option<&'a ScalerParams>,
    model: &'a AEModel,
}

#[derive(Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    scaler: Option<ScalerParams>,
    model: AEModel,
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn mean_squared_residual(x: &[f64], recon: &[f64]) -> f64 {
    let sum: f64 = x.iter().zip(recon).map(|(a, b)| (b - a) * (b - a)).sum();
    sum / x.len() as f64
}

fn batch_mse(batch: &Matrix, recon: &Matrix) -> f64 {
    let total: f64 = batch
        .row_iter()
        .zip(recon.row_iter())
        .map(|(x, r)| mean_squared_residual(x, r))
        .sum();
    total / batch.rows() as f64
}

/// `aᵀ · b` for row-major `a [n × p]`, `b [n × q]`.
fn transpose_times(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = (a.cols(), b.cols());
    let mut out = Matrix::zeros(p, q);
    for (ar, br) in a.row_iter().zip(b.row_iter()) {
        for (i, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, bv) in out.row_mut(i).iter_mut().zip(br) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a · wᵀ` for `a [n × q]`, `w [p × q]`.
fn times_transpose(a: &Matrix, w: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), w.rows());
    for r in 0..a.rows() {
        let ar = a.row(r);
        for i in 0..w.rows() {
            let v: f64 = ar.iter().zip(w.row(i)).map(|(x, y)| x * y).sum();
            out.set(r, i, v);
        }
    }
    out
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.row_iter() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

struct Adam {
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
        }
    }
}

/// Trains `model` on the rows of `train` (labels ignored) and reports the
/// per-epoch mean training loss plus the final validation MSE.
pub fn train(
    model: &AEModel,
    train: &CleanDataset,
    val: &CleanDataset,
    config: &AEConfig,
) -> Result<(AEModel, TrainReport)> {
    config.validate()?;
    for ds in [train, val] {
        if ds.n_features() != model.input_dim {
            return Err(Error::Dimension {
                expected: model.input_dim,
                actual: ds.n_features(),
            });
        }
    }
    if train.n_rows() == 0 || val.n_rows() == 0 {
        return Err(Error::InvalidArgument(
            "training and validation sets must be non-empty".into(),
        ));
    }

    let mut model = model.clone();
    model.config = config.clone();
    let mut params = model.flat_parameters();
    let mut adam = Adam::new(params.len());
    let mut rng = rng_from_seed(derive_seed(config.seed, "autoencoder-shuffle"));
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (batch_index, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train.features().select_rows(idx);
            let (loss, grads) = model.loss_and_gradients(&batch).map_err(|_| Error::NonFiniteLoss {
                epoch,
                batch: batch_index,
            })?;
            let grads = grads.flatten();
            if !loss.is_finite() || !grads.iter().all(|g| g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_index,
                });
            }
            weighted += loss * idx.len() as f64;
            adam.update(&mut params, &grads, config.learning_rate);
            model.set_flat_parameters(&params)?;
        }
        let epoch_loss = weighted / train.n_rows() as f64;
        log::debug!("epoch {epoch}: loss {epoch_loss:.6}");
        loss_history.push(epoch_loss);
    }

    let val_scores = model.score_batch(val)?;
    let final_validation_mse = val_scores.iter().sum::<f64>() / val_scores.len() as f64;
    Ok((
        model,
        TrainReport {
            loss_history,
            final_validation_mse,
        },
    ))
}
