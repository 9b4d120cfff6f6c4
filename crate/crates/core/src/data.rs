//! Flow-record ingestion: CSV loading, non-finite cleaning, standardization,
//! splitting, column selection and the synthetic planted-anomaly generator.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::rng_from_seed;

/// One parsed CSV cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Value(f64),
    /// Empty, unparseable or NaN.
    Missing,
    /// Positive or negative infinity.
    NonFinite(f64),
}

impl Cell {
    pub fn parse(text: &str) -> Cell {
        let t = text.trim();
        if t.is_empty() {
            return Cell::Missing;
        }
        let lower = t.to_ascii_lowercase();
        match lower.trim_start_matches('+') {
            "inf" | "infinity" => return Cell::NonFinite(f64::INFINITY),
            "-inf" | "-infinity" => return Cell::NonFinite(f64::NEG_INFINITY),
            "nan" | "-nan" => return Cell::Missing,
            _ => {}
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Cell::Value(v),
            Ok(v) if v.is_nan() => Cell::Missing,
            Ok(v) => Cell::NonFinite(v),
            Err(_) => Cell::Missing,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(v),
            _ => None,
        }
    }
}

/// How to find and binarize the label column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSpec {
    pub column: String,
    /// Label text counted as benign (0); everything else is an attack (1).
    pub benign: String,
}

impl LabelSpec {
    pub fn new(column: impl Into<String>, benign: impl Into<String>) -> Self {
        Self {
            column: column.into(),
            benign: benign.into(),
        }
    }
}

/// A CSV file as read, before any cleaning.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub label_column: Option<String>,
    /// Binarized labels, present iff `label_column` is.
    pub labels: Option<Vec<u8>>,
}

impl RawTable {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_columns(&self) -> usize {
        self.column_names.len()
    }
}

/// Makes header names unique the way common dataframe readers do
/// (`name`, `name.1`, `name.2`, ...). CICIDS2017 repeats a header.
fn dedupe_names(names: Vec<String>) -> Vec<String> {
    let mut seen: HashSet<String> = HashSet::new();
    let mut counts: HashMap<String, usize> = HashMap::new();
    names
        .into_iter()
        .map(|name| {
            if seen.insert(name.clone()) {
                return name;
            }
            let n = counts.entry(name.clone()).or_insert(0);
            loop {
                *n += 1;
                let candidate = format!("{name}.{n}");
                if seen.insert(candidate.clone()) {
                    return candidate;
                }
            }
        })
        .collect()
}

pub fn load_csv(path: impl AsRef<Path>, label: Option<&LabelSpec>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    };

    let header = reader.headers().map_err(csv_err)?.clone();
    let column_names = dedupe_names(header.iter().map(|h| h.trim().to_string()).collect());
    let n_cols = column_names.len();

    let label_index = match label {
        Some(spec) => Some(
            column_names
                .iter()
                .position(|c| *c == spec.column)
                .ok_or_else(|| Error::UnknownColumns(vec![spec.column.clone()]))?,
        ),
        None => None,
    };

    let mut rows = Vec::new();
    let mut labels = label_index.map(|_| Vec::new());
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(csv_err)? {
        if record.len() != n_cols {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                line: record.position().map_or(0, |p| p.line()),
                expected: n_cols,
                found: record.len(),
            });
        }
        rows.push(record.iter().map(Cell::parse).collect());
        if let (Some(idx), Some(labels), Some(spec)) = (label_index, labels.as_mut(), label) {
            labels.push(u8::from(record[idx].trim() != spec.benign));
        }
    }
    log::debug!("{}: {} rows x {} columns", path.display(), rows.len(), n_cols);

    Ok(RawTable {
        column_names,
        rows,
        label_column: label.map(|s| s.column.clone()),
        labels,
    })
}

/// Population mean and standard deviation per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ScalerParams {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    fn transform(&self, features: &Matrix) -> Matrix {
        let mut out = features.clone();
        let cols = out.cols();
        for row in out.as_mut_slice().chunks_exact_mut(cols.max(1)) {
            for ((v, mean), std) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = if *std > 0.0 { (*v - mean) / std } else { 0.0 };
            }
        }
        out
    }

    /// Undoes the transform (`x * std + mean`); zero-variance columns come
    /// back as their mean.
    pub fn invert(&self, standardized: &Matrix) -> Matrix {
        let mut out = standardized.clone();
        let cols = out.cols();
        for row in out.as_mut_slice().chunks_exact_mut(cols.max(1)) {
            for ((v, mean), std) in row.iter_mut().zip(&self.means).zip(&self.stds) {
                *v = *v * std + mean;
            }
        }
        out
    }

    pub fn select(&self, indices: &[usize]) -> ScalerParams {
        ScalerParams {
            feature_names: indices.iter().map(|&i| self.feature_names[i].clone()).collect(),
            means: indices.iter().map(|&i| self.means[i]).collect(),
            stds: indices.iter().map(|&i| self.stds[i]).collect(),
        }
    }
}

/// Notes attached to a dataset that travel with it through selection and
/// serialization.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Planted informative columns (synthetic data only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub informative: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// A finite-valued feature matrix with names and optional binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanDataset {
    features: Matrix,
    feature_names: Vec<String>,
    labels: Option<Vec<u8>>,
    pub scaler: Option<ScalerParams>,
    pub meta: DatasetMeta,
}

impl CleanDataset {
    pub fn new(features: Matrix, feature_names: Vec<String>, labels: Option<Vec<u8>>) -> Result<Self> {
        if feature_names.len() != features.cols() {
            return Err(Error::Dimension {
                expected: features.cols(),
                actual: feature_names.len(),
            });
        }
        if !features.is_finite() {
            return Err(Error::InvalidArgument(
                "feature matrix contains non-finite values".into(),
            ));
        }
        let mut seen = HashSet::new();
        let dups: Vec<String> = feature_names
            .iter()
            .filter(|n| !seen.insert(n.as_str()))
            .cloned()
            .collect();
        if !dups.is_empty() {
            return Err(Error::DuplicateColumns(dups));
        }
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::Dimension {
                    expected: features.rows(),
                    actual: labels.len(),
                });
            }
            if labels.iter().any(|&l| l > 1) {
                return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            features,
            feature_names,
            labels,
            scaler: None,
            meta: DatasetMeta::default(),
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    /// Rows at `indices`, in that order.
    pub fn take_rows(&self, indices: &[usize]) -> CleanDataset {
        CleanDataset {
            features: self.features.select_rows(indices),
            feature_names: self.feature_names.clone(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            scaler: self.scaler.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Rows whose label equals `class`. Unlabelled datasets yield nothing.
    pub fn rows_with_label(&self, class: u8) -> CleanDataset {
        let idx: Vec<usize> = match &self.labels {
            Some(l) => (0..l.len()).filter(|&i| l[i] == class).collect(),
            None => Vec::new(),
        };
        self.take_rows(&idx)
    }

    /// Stacks rows of `other` under `self`. Both must share feature names.
    pub fn concat(&self, other: &CleanDataset) -> Result<CleanDataset> {
        if self.feature_names != other.feature_names {
            return Err(Error::FeatureMismatch(mismatched(
                &self.feature_names,
                &other.feature_names,
            )));
        }
        let mut data = self.features.as_slice().to_vec();
        data.extend_from_slice(other.features.as_slice());
        let features = Matrix::from_vec(self.n_rows() + other.n_rows(), self.n_features(), data)?;
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            (None, None) => None,
            _ => {
                return Err(Error::InvalidArgument(
                    "cannot concatenate labelled and unlabelled data".into(),
                ))
            }
        };
        let mut out = CleanDataset::new(features, self.feature_names.clone(), labels)?;
        out.scaler = self.scaler.clone();
        out.meta = self.meta.clone();
        Ok(out)
    }

    pub fn without_labels(mut self) -> CleanDataset {
        self.labels = None;
        self
    }
}

fn mismatched(a: &[String], b: &[String]) -> Vec<String> {
    let sa: HashSet<&String> = a.iter().collect();
    let sb: HashSet<&String> = b.iter().collect();
    let mut out: Vec<String> = sa.symmetric_difference(&sb).map(|s| s.to_string()).collect();
    if out.is_empty() {
        // same names, different order
        out = a
            .iter()
            .zip(b)
            .filter(|(x, y)| x != y)
            .map(|(x, _)| x.clone())
            .collect();
    }
    out.sort();
    out
}

/// Replaces missing and infinite cells with the mean of the finite values in
/// their column and moves the label column out of the feature matrix.
pub fn clean(raw: &RawTable) -> Result<CleanDataset> {
    if raw.rows.is_empty() {
        return Err(Error::InvalidArgument("cannot clean a table with no rows".into()));
    }
    let keep: Vec<usize> = (0..raw.n_columns())
        .filter(|&c| Some(&raw.column_names[c]) != raw.label_column.as_ref())
        .collect();
    let names: Vec<String> = keep.iter().map(|&c| raw.column_names[c].clone()).collect();

    let mut warnings = Vec::new();
    let fills: Vec<f64> = keep
        .iter()
        .map(|&c| {
            let (sum, count) = raw
                .rows
                .iter()
                .filter_map(|r| r[c].finite())
                .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            if count == 0 {
                let msg = format!("column '{}' has no finite values; filled with 0.0", raw.column_names[c]);
                log::warn!("{msg}");
                warnings.push(msg);
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();

    let mut data = Vec::with_capacity(raw.rows.len() * keep.len());
    for row in &raw.rows {
        data.extend(
            keep.iter()
                .zip(&fills)
                .map(|(&c, &fill)| row[c].finite().unwrap_or(fill)),
        );
    }
    let features = Matrix::from_vec(raw.rows.len(), keep.len(), data)?;
    let mut ds = CleanDataset::new(features, names, raw.labels.clone())?;
    ds.meta.warnings = warnings;
    Ok(ds)
}

/// Fits per-column population statistics and standardizes `ds` with them.
pub fn fit_standardize(ds: &CleanDataset) -> Result<(CleanDataset, ScalerParams)> {
    let n = ds.n_rows();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot fit a scaler on zero rows".into()));
    }
    let d = ds.n_features();
    let mut means = vec![0.0; d];
    for row in ds.features.row_iter() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut vars = vec![0.0; d];
    for row in ds.features.row_iter() {
        for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stds = vars.into_iter().map(|s| (s / n as f64).sqrt()).collect();
    let params = ScalerParams {
        feature_names: ds.feature_names.clone(),
        means,
        stds,
    };
    let out = apply_standardize(ds, &params)?;
    Ok((out, params))
}

/// Standardizes `ds` with previously fitted parameters.
pub fn apply_standardize(ds: &CleanDataset, params: &ScalerParams) -> Result<CleanDataset> {
    if ds.feature_names != params.feature_names {
        return Err(Error::FeatureMismatch(mismatched(
            &ds.feature_names,
            &params.feature_names,
        )));
    }
    let mut out = ds.clone();
    out.features = params.transform(&ds.features);
    out.scaler = Some(params.clone());
    Ok(out)
}

/// Seeded shuffle-then-cut split. The first part holds
/// `floor(train_fraction * n)` rows (at least one row in each part).
pub fn split(ds: &CleanDataset, train_fraction: f64, seed: u64) -> Result<(CleanDataset, CleanDataset)> {
    let n = ds.n_rows();
    if n < 2 {
        return Err(Error::InvalidArgument("split needs at least two rows".into()));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = ((train_fraction * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((ds.take_rows(&train_idx), ds.take_rows(&val_idx)))
}

/// Restricts `ds` to the named columns, in the requested order.
pub fn select_columns<S: AsRef<str>>(ds: &CleanDataset, names: &[S]) -> Result<CleanDataset> {
    let position: HashMap<&str, usize> = ds
        .feature_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut seen = HashSet::new();
    let dups: Vec<String> = names
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| !seen.insert(*n))
        .map(str::to_string)
        .collect();
    if !dups.is_empty() {
        return Err(Error::DuplicateColumns(dups));
    }
    let unknown: Vec<String> = names
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| !position.contains_key(n))
        .map(str::to_string)
        .collect();
    if !unknown.is_empty() {
        return Err(Error::UnknownColumns(unknown));
    }
    let indices: Vec<usize> = names.iter().map(|n| position[n.as_ref()]).collect();

    let informative = ds.meta.informative.as_ref().map(|inf| {
        indices
            .iter()
            .enumerate()
            .filter(|(_, src)| inf.contains(src))
            .map(|(dst, _)| dst)
            .collect()
    });
    Ok(CleanDataset {
        features: ds.features.select_columns(&indices),
        feature_names: indices.iter().map(|&i| ds.feature_names[i].clone()).collect(),
        labels: ds.labels.clone(),
        scaler: ds.scaler.as_ref().map(|s| s.select(&indices)),
        meta: DatasetMeta {
            informative,
            warnings: ds.meta.warnings.clone(),
        },
    })
}

/// Parameters of the synthetic planted-anomaly generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthParams {
    pub n_benign: usize,
    pub n_attack: usize,
    pub n_features: usize,
    pub n_informative: usize,
    pub shift: f64,
    pub seed: u64,
}

/// Generates a labelled dataset with benign rows first, then attack rows.
///
/// Benign rows follow a low-rank latent-factor model: each column is a
/// unit-variance mix of shared factors plus a little idiosyncratic noise,
/// then scaled and offset. Attack rows are drawn the same way, except that
/// on the informative columns the standardized value `u` becomes
/// `sqrt(1 - a^2) * u + a * e + shift` with `e` independent noise and
/// `a = min(1, |shift|)`. The marginal variance is unchanged, the columns lose
/// their correlation with the rest, and `shift = 0` leaves attack rows
/// distributed exactly like benign ones.
pub fn synth_generate(p: &SynthParams) -> Result<CleanDataset> {
    if p.n_informative == 0 || p.n_informative > p.n_features {
        return Err(Error::InvalidArgument(format!(
            "need 0 < n_informative ({}) <= n_features ({})",
            p.n_informative, p.n_features
        )));
    }
    let d = p.n_features;
    let rank = (d / 5).clamp(1, 8);
    let noise = 0.3;
    let mut rng = rng_from_seed(p.seed);

    let mut loadings = Matrix::zeros(d, rank);
    for v in loadings.as_mut_slice() {
        *v = rng.sample(StandardNormal);
    }
    let norms: Vec<f64> = (0..d)
        .map(|j| (loadings.row(j).iter().map(|a| a * a).sum::<f64>() + noise * noise).sqrt())
        .collect();
    let offsets: Vec<f64> = (0..d).map(|_| rng.random_range(-10.0..10.0)).collect();
    let scales: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..5.0)).collect();
    let mut informative: Vec<usize> = index::sample(&mut rng, d, p.n_informative).into_vec();
    informative.sort_unstable();
    let is_informative: Vec<bool> = (0..d).map(|j| informative.binary_search(&j).is_ok()).collect();
    let mix = p.shift.abs().min(1.0);
    let keep = (1.0 - mix * mix).sqrt();

    let n = p.n_benign + p.n_attack;
    let mut data = Vec::with_capacity(n * d);
    let mut latent = vec![0.0; rank];
    for r in 0..n {
        let attack = r >= p.n_benign;
        latent.iter_mut().for_each(|z| *z = rng.sample(StandardNormal));
        for j in 0..d {
            let eps: f64 = rng.sample(StandardNormal);
            let shared: f64 = loadings.row(j).iter().zip(&latent).map(|(a, z)| a * z).sum();
            let mut u = (shared + noise * eps) / norms[j];
            if attack && is_informative[j] {
                let fresh: f64 = rng.sample(StandardNormal);
                u = keep * u + mix * fresh + p.shift;
            }
            data.push(offsets[j] + scales[j] * u);
        }
    }
    let features = Matrix::from_vec(n, d, data)?;
    let names = (0..d).map(|j| format!("f{j:02}")).collect();
    let labels = (0..n).map(|r| u8::from(r >= p.n_benign)).collect();
    let mut ds = CleanDataset::new(features, names, Some(labels))?;
    ds.meta.informative = Some(informative);
    Ok(ds)
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetSidecar {
    feature_names: Vec<String>,
    has_labels: bool,
    #[serde(default)]
    scaler: Option<ScalerParams>,
    #[serde(flatten)]
    meta: DatasetMeta,
}

pub const LABEL_HEADER: &str = "label";

/// Path of the metadata file written next to a dataset CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    csv_path.with_file_name(name)
}

/// Writes `ds` as a CSV (features, then a `label` column when labelled) plus
/// a JSON sidecar with names, scaler and metadata.
pub fn write_dataset(ds: &CleanDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    if ds.labels.is_some() {
        header.push(LABEL_HEADER);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    out.push_str(std::str::from_utf8(&w.into_inner().unwrap_or_default()).unwrap_or_default());
    for (i, row) in ds.features.row_iter().enumerate() {
        let mut cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        if let Some(labels) = &ds.labels {
            cells.push(labels[i].to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;

    let sidecar = DatasetSidecar {
        feature_names: ds.feature_names.clone(),
        has_labels: ds.labels.is_some(),
        scaler: ds.scaler.clone(),
        meta: ds.meta.clone(),
    };
    let meta_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::parse("dataset metadata", e))?;
    fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(path: impl AsRef<Path>) -> Result<CleanDataset> {
    let path = path.as_ref();
    let meta_path = sidecar_path(path);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let sidecar: DatasetSidecar = serde_json::from_str(&text).map_err(|e| Error::parse("dataset metadata", e))?;
    let label = sidecar.has_labels.then(|| LabelSpec::new(LABEL_HEADER, "0"));
    let raw = load_csv(path, label.as_ref())?;
    let mut ds = clean(&raw)?;
    if ds.feature_names != sidecar.feature_names {
        return Err(Error::FeatureMismatch(mismatched(
            &ds.feature_names,
            &sidecar.feature_names,
        )));
    }
    ds.scaler = sidecar.scaler;
    ds.meta = sidecar.meta;
    Ok(ds)
}
