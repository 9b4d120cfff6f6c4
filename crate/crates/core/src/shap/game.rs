use crate::autoencoder::AEModel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::coalition::Coalition;
use super::kmeans::BackgroundSet;

/// A cooperative game over `n_players` features.
pub trait CoalitionGame: Sync {
    fn n_players(&self) -> usize;

    /// Value of each coalition, in order.
    fn evaluate(&self, coalitions: &[Coalition]) -> Result<Vec<f64>>;
}

/// Expected reconstruction error of background hybrids, scaled by `1/d`.
pub struct ReconstructionGame<'a> {
    model: &'a AEModel,
    x: &'a [f64],
    background: &'a BackgroundSet,
}

/// Upper bound on hybrid rows pushed through the network per batch.
const HYBRID_BATCH_ROWS: usize = 8192;

impl<'a> ReconstructionGame<'a> {
    pub fn new(model: &'a AEModel, x: &'a [f64], background: &'a BackgroundSet) -> Result<Self> {
        for actual in [x.len(), background.dim()] {
            if actual != model.input_dim {
                return Err(Error::Dimension {
                    expected: model.input_dim,
                    actual,
                });
            }
        }
        Ok(Self { model, x, background })
    }

    fn hybrid_value(&self, recon_errors: &[f64]) -> f64 {
        let expected: f64 = self
            .background
            .weights
            .iter()
            .zip(recon_errors)
            .map(|(w, e)| w * e)
            .sum();
        expected / self.x.len() as f64
    }
}

impl CoalitionGame for ReconstructionGame<'_> {
    fn n_players(&self) -> usize {
        self.x.len()
    }

    fn evaluate(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let d = self.x.len();
        let k = self.background.len();
        let mut values = vec![0.0; coalitions.len()];

        if let Some(bad) = coalitions.iter().find(|c| c.dim() != d) {
            return Err(Error::Dimension {
                expected: d,
                actual: bad.dim(),
            });
        }
        // The grand coalition replaces nothing, so its value is exactly RE(x)/d.
        let full_value = self.model.reconstruction_error(self.x)? / d as f64;
        let mut pending = Vec::with_capacity(coalitions.len());
        for (i, c) in coalitions.iter().enumerate() {
            if c.is_full() {
                values[i] = full_value;
            } else {
                pending.push(i);
            }
        }

        let per_batch = (HYBRID_BATCH_ROWS / k).max(1);
        for chunk in pending.chunks(per_batch) {
            let mut data = Vec::with_capacity(chunk.len() * k * d);
            for &ci in chunk {
                let coalition = &coalitions[ci];
                for b in self.background.points.row_iter() {
                    data.extend((0..d).map(|i| if coalition.contains(i) { self.x[i] } else { b[i] }));
                }
            }
            let hybrids = Matrix::from_vec(chunk.len() * k, d, data)?;
            let errors = self.model.score_rows(&hybrids)?;
            for (&ci, errs) in chunk.iter().zip(errors.chunks_exact(k)) {
                values[ci] = self.hybrid_value(errs);
            }
        }
        Ok(values)
    }
}

/// `V(S) = (1/d) * sum_j w_j * RE(z_j)` for a single coalition.
pub fn value_function(model: &AEModel, x: &[f64], coalition: &Coalition, background: &BackgroundSet) -> Result<f64> {
    let game = ReconstructionGame::new(model, x, background)?;
    Ok(game.evaluate(std::slice::from_ref(coalition))?[0])
}

/// Additive game `V(S) = Σ_{i∈S} w_i (x_i - b̄_i)`, whose Shapley values are
/// the summands themselves.
pub struct LinearGame {
    pub contributions: Vec<f64>,
}

impl LinearGame {
    pub fn new(weights: &[f64], x: &[f64], background_mean: &[f64]) -> Self {
        Self {
            contributions: weights
                .iter()
                .zip(x)
                .zip(background_mean)
                .map(|((w, xi), bi)| w * (xi - bi))
                .collect(),
        }
    }
}

impl CoalitionGame for LinearGame {
    fn n_players(&self) -> usize {
        self.contributions.len()
    }

    fn evaluate(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        Ok(coalitions
            .iter()
            .map(|c| c.members().map(|i| self.contributions[i]).sum())
            .collect())
    }
}
