use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autoencoder::AEModel;
use crate::data::CleanDataset;
use crate::error::{Error, Result};
use crate::linalg::{solve, Matrix};

use super::coalition::{enumerate_weighted, sample_coalitions, KernelWeight, WeightedCoalition};
use super::game::{CoalitionGame, ReconstructionGame};
use super::kmeans::BackgroundSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMode {
    /// Enumerate all `2^d` coalitions.
    Exact,
    /// Draw `sample_budget` coalitions.
    Sampled,
}

/// Normalization of the value function. Only the `1/d` per-dimension factor
/// is supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueScale {
    #[default]
    PerDimension,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub mode: ExplainMode,
    pub sample_budget: usize,
    pub kmeans_k: usize,
    pub seed: u64,
    pub value_scale: ValueScale,
    /// Explain instances of a batch on the rayon pool.
    pub parallel: bool,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            mode: ExplainMode::Exact,
            sample_budget: 2048,
            kmeans_k: 10,
            seed: 0,
            value_scale: ValueScale::PerDimension,
            parallel: true,
        }
    }
}

/// Per-feature attribution of one instance's value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub full_value: f64,
    pub instance_index: usize,
    pub feature_names: Vec<String>,
}

impl ShapExplanation {
    /// `|base_value + Σ phi − full_value|`.
    pub fn local_accuracy_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.full_value).abs()
    }
}

/// Result of the constrained kernel regression.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSolution {
    pub phi: Vec<f64>,
    pub base_value: f64,
    pub full_value: f64,
}

const PIVOT_TOLERANCE: f64 = 1e-13;
const JITTER: f64 = 1e-10;

/// Solves for Shapley values of `game` from weighted coalitions.
///
/// The empty and grand coalitions must be present. With `Δ = V(D) − V(∅)`
/// the last coefficient is eliminated as `φ_{d-1} = Δ − Σ_{i<d-1} φ_i`, so
/// each finite-weight coalition `z` contributes the regression row
/// `(z_i − z_{d-1})_{i<d-1}` with target `V(z) − V(∅) − z_{d-1} Δ`. The
/// weighted normal equations are solved directly, retrying once with a small
/// diagonal jitter.
pub fn kernel_shap<G: CoalitionGame + ?Sized>(game: &G, coalitions: &[WeightedCoalition]) -> Result<KernelSolution> {
    let d = game.n_players();
    let plain: Vec<_> = coalitions.iter().map(|w| w.coalition.clone()).collect();
    let values = game.evaluate(&plain)?;
    let find = |pred: fn(&WeightedCoalition) -> bool| {
        coalitions
            .iter()
            .position(pred)
            .map(|i| values[i])
            .ok_or_else(|| Error::InvalidArgument("coalitions must include the empty and grand coalitions".into()))
    };
    let base_value = find(|w| w.coalition.is_empty())?;
    let full_value = find(|w| w.coalition.is_full())?;
    let delta = full_value - base_value;

    if d == 1 {
        return Ok(KernelSolution {
            phi: vec![delta],
            base_value,
            full_value,
        });
    }

    let p = d - 1;
    let last = d - 1;
    let mut normal = Matrix::zeros(p, p);
    let mut rhs = vec![0.0; p];
    let mut rows = 0usize;
    let mut row = vec![0.0; p];
    for (wc, value) in coalitions.iter().zip(&values) {
        let KernelWeight::Finite(w) = wc.weight else {
            continue;
        };
        if w == 0.0 || wc.coalition.is_empty() || wc.coalition.is_full() {
            continue;
        }
        rows += 1;
        let z_last = if wc.coalition.contains(last) { 1.0 } else { 0.0 };
        for (i, r) in row.iter_mut().enumerate() {
            *r = if wc.coalition.contains(i) { 1.0 } else { 0.0 } - z_last;
        }
        let target = value - base_value - z_last * delta;
        for i in 0..p {
            if row[i] == 0.0 {
                continue;
            }
            let wi = w * row[i];
            rhs[i] += wi * target;
            let out = normal.row_mut(i);
            for (o, rj) in out.iter_mut().zip(&row) {
                *o += wi * rj;
            }
        }
    }
    if rows < p {
        return Err(Error::SingularSystem {
            coalitions: rows,
            features: d,
        });
    }

    let solution = solve(&normal, &rhs, PIVOT_TOLERANCE).or_else(|| {
        let mut jittered = normal.clone();
        for i in 0..p {
            jittered.set(i, i, jittered.get(i, i) + JITTER);
        }
        solve(&jittered, &rhs, PIVOT_TOLERANCE)
    });
    let Some(mut phi) = solution else {
        return Err(Error::SingularSystem {
            coalitions: rows,
            features: d,
        });
    };
    let head: f64 = phi.iter().sum();
    phi.push(delta - head);
    Ok(KernelSolution {
        phi,
        base_value,
        full_value,
    })
}

fn feature_names_for(model: &AEModel) -> Vec<String> {
    if model.feature_names.len() == model.input_dim {
        model.feature_names.clone()
    } else {
        (0..model.input_dim).map(|i| format!("x{i}")).collect()
    }
}

fn explain_with(
    model: &AEModel,
    x: &[f64],
    background: &BackgroundSet,
    cfg: &ExplainerConfig,
    instance_index: usize,
    enumerated: Option<&[WeightedCoalition]>,
) -> Result<ShapExplanation> {
    let game = ReconstructionGame::new(model, x, background)?;
    let d = x.len();
    let solution = match (cfg.mode, enumerated) {
        (_, _) if d == 1 => kernel_shap(&game, &single_feature_coalitions())?,
        (ExplainMode::Exact, Some(list)) => kernel_shap(&game, list)?,
        (ExplainMode::Exact, None) => kernel_shap(&game, &enumerate_weighted(d)?)?,
        (ExplainMode::Sampled, _) => {
            let seed = cfg.seed ^ instance_index as u64;
            kernel_shap(&game, &sample_coalitions(d, cfg.sample_budget, seed)?)?
        }
    };
    Ok(ShapExplanation {
        phi: solution.phi,
        base_value: solution.base_value,
        full_value: solution.full_value,
        instance_index,
        feature_names: feature_names_for(model),
    })
}

fn single_feature_coalitions() -> Vec<WeightedCoalition> {
    use super::coalition::Coalition;
    [Coalition::empty(1), Coalition::full(1)]
        .into_iter()
        .map(|coalition| WeightedCoalition {
            coalition,
            weight: KernelWeight::Infinite,
        })
        .collect()
}

/// Explains one instance (index 0 for seeding purposes).
pub fn explain_instance(
    model: &AEModel,
    x: &[f64],
    background: &BackgroundSet,
    cfg: &ExplainerConfig,
) -> Result<ShapExplanation> {
    explain_with(model, x, background, cfg, 0, None)
}

/// Explains each row of `rows`; row `r` is recorded (and seeded) as
/// instance `indices[r]`.
pub fn explain_rows(
    model: &AEModel,
    rows: &Matrix,
    indices: &[usize],
    background: &BackgroundSet,
    cfg: &ExplainerConfig,
) -> Result<Vec<ShapExplanation>> {
    if indices.len() != rows.rows() {
        return Err(Error::Dimension {
            expected: rows.rows(),
            actual: indices.len(),
        });
    }
    let d = rows.cols();
    let enumerated = match cfg.mode {
        ExplainMode::Exact if d > 1 => Some(enumerate_weighted(d)?),
        _ => None,
    };
    let one = |r: usize| explain_with(model, rows.row(r), background, cfg, indices[r], enumerated.as_deref());
    if cfg.parallel {
        (0..rows.rows()).into_par_iter().map(one).collect()
    } else {
        (0..rows.rows()).map(one).collect()
    }
}

/// One explanation per row of `instances`, indexed by row position.
pub fn explain_batch(
    model: &AEModel,
    instances: &CleanDataset,
    background: &BackgroundSet,
    cfg: &ExplainerConfig,
) -> Result<Vec<ShapExplanation>> {
    if instances.n_features() != model.input_dim {
        return Err(Error::Dimension {
            expected: model.input_dim,
            actual: instances.n_features(),
        });
    }
    let indices: Vec<usize> = (0..instances.n_rows()).collect();
    explain_rows(model, instances.features(), &indices, background, cfg)
}

const EXPLANATION_HEADER: &str = "instance\tfeature_index\tfeature\tphi\tbase_value\tfull_value";

/// Writes one row per (instance, feature), ordered by instance then feature.
pub fn write_explanations(explanations: &[ShapExplanation], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(EXPLANATION_HEADER);
    out.push('\n');
    for e in explanations {
        for (i, (phi, name)) in e.phi.iter().zip(&e.feature_names).enumerate() {
            let _ = writeln!(
                out,
                "{}\t{i}\t{name}\t{phi:?}\t{:?}\t{:?}",
                e.instance_index, e.base_value, e.full_value
            );
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_explanations(path: impl AsRef<Path>) -> Result<Vec<ShapExplanation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(EXPLANATION_HEADER) {
        return Err(Error::parse(
            "explanations",
            format!("{}: unexpected header", path.display()),
        ));
    }
    let mut out: Vec<ShapExplanation> = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = |msg: &str| Error::parse("explanations", format!("{}: line {}: {msg}", path.display(), n + 2));
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("invalid number"));
        let instance: usize = cells[0].parse().map_err(|_| bad("invalid instance index"))?;
        let feature: usize = cells[1].parse().map_err(|_| bad("invalid feature index"))?;
        let (phi, base, full) = (num(cells[3])?, num(cells[4])?, num(cells[5])?);
        match out.last_mut() {
            Some(e) if e.instance_index == instance && feature == e.phi.len() => {
                e.phi.push(phi);
                e.feature_names.push(cells[2].to_string());
            }
            _ if feature == 0 => out.push(ShapExplanation {
                phi: vec![phi],
                base_value: base,
                full_value: full,
                instance_index: instance,
                feature_names: vec![cells[2].to_string()],
            }),
            _ => return Err(bad("rows out of order")),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::AEConfig;
    use crate::shap::coalition::{enumerate_coalitions, shapley_kernel_weight};
    use crate::shap::exact::brute_force_shapley;
    use crate::shap::game::LinearGame;

    fn model(d: usize, seed: u64) -> AEModel {
        let config = AEConfig {
            hidden_layers: vec![5, 3, 5],
            seed,
            ..AEConfig::default()
        };
        AEModel::init(&config, d).unwrap()
    }

    fn background(d: usize) -> BackgroundSet {
        let rows: Vec<Vec<f64>> = (0..3)
            .map(|j| (0..d).map(|i| ((i * 7 + j * 3) % 5) as f64 * 0.4 - 0.8).collect())
            .collect();
        BackgroundSet::uniform(&Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn exact_matches_brute_force() {
        let d = 6;
        let m = model(d, 3);
        let bg = background(d);
        let x: Vec<f64> = (0..d).map(|i| (i as f64 - 2.5) * 0.7).collect();
        let e = explain_instance(&m, &x, &bg, &ExplainerConfig::default()).unwrap();
        let oracle = brute_force_shapley(&ReconstructionGame::new(&m, &x, &bg).unwrap()).unwrap();
        for (a, b) in e.phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        assert!(e.local_accuracy_gap() < 1e-12);
    }

    #[test]
    fn linear_game_closed_form() {
        let w = [0.5, -1.0, 2.0, 0.25];
        let game = LinearGame::new(&w, &[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, 1.0, 2.0]);
        let list: Vec<_> = enumerate_coalitions(4)
            .unwrap()
            .into_iter()
            .map(|c| {
                let weight = shapley_kernel_weight(4, c.size());
                WeightedCoalition { coalition: c, weight }
            })
            .collect();
        let sol = kernel_shap(&game, &list).unwrap();
        for (a, b) in sol.phi.iter().zip(&game.contributions) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_coalitions_is_singular() {
        let d = 30;
        let m = model(d, 1);
        let bg = background(d);
        let cfg = ExplainerConfig {
            mode: ExplainMode::Sampled,
            sample_budget: 10,
            ..ExplainerConfig::default()
        };
        let err = explain_instance(&m, &vec![0.1; d], &bg, &cfg).unwrap_err();
        assert!(matches!(err, Error::SingularSystem { features: 30, .. }), "{err}");
    }

    #[test]
    fn exact_mode_rejects_wide_inputs() {
        let d = 21;
        let err = explain_instance(&model(d, 1), &vec![0.0; d], &background(d), &ExplainerConfig::default());
        assert!(matches!(err, Err(Error::TooManyFeatures { .. })));
    }

    #[test]
    fn single_feature_gets_everything() {
        let config = AEConfig {
            hidden_layers: vec![2],
            seed: 4,
            ..AEConfig::default()
        };
        let m = AEModel::init(&config, 1).unwrap();
        let bg = background(1);
        let e = explain_instance(&m, &[3.0], &bg, &ExplainerConfig::default()).unwrap();
        assert_eq!(e.phi.len(), 1);
        assert!(e.local_accuracy_gap() < 1e-15);
    }

    #[test]
    fn explanation_file_round_trip() {
        let d = 4;
        let m = model(d, 2);
        let rows = Matrix::from_rows(&[vec![0.1, 0.2, -0.3, 1.0], vec![2.0, -1.0, 0.0, 0.5]]).unwrap();
        let ex = explain_rows(&m, &rows, &[7, 3], &background(d), &ExplainerConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ex.tsv");
        write_explanations(&ex, &path).unwrap();
        assert_eq!(read_explanations(&path).unwrap(), ex);
    }
}
