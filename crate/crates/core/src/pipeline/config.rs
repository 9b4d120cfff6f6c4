use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::AEConfig;
use crate::error::{Error, Result};
use crate::shap::ExplainMode;

pub const DEFAULT_SEED: u64 = 1;

/// Where the flows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Planted-anomaly synthetic data, generated from the run seed.
    Synth {
        n_train_benign: usize,
        n_test_benign: usize,
        n_attack: usize,
        n_features: usize,
        n_informative: usize,
        shift: f64,
    },
    /// Benign training flows and a labelled test file.
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
        #[serde(default = "default_benign_label")]
        benign_label: String,
        /// Optional seeded subsampling caps.
        #[serde(default)]
        max_train_rows: Option<usize>,
        #[serde(default)]
        max_test_benign: Option<usize>,
        #[serde(default)]
        max_test_attack: Option<usize>,
    },
}

fn default_label_column() -> String {
    "Label".into()
}

fn default_benign_label() -> String {
    "BENIGN".into()
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synth {
            n_train_benign: 5000,
            n_test_benign: 2000,
            n_attack: 400,
            n_features: 50,
            n_informative: 10,
            shift: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    /// `None` picks exact mode up to 20 features and sampled mode above.
    pub mode: Option<ExplainMode>,
    /// `None` means `2 * d + 2048`.
    pub sample_budget: Option<usize>,
    pub kmeans_k: usize,
    pub parallel: bool,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            mode: None,
            sample_budget: None,
            kmeans_k: 10,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Shared by both detectors. Its `seed` is replaced by one derived from
    /// the run seed.
    pub autoencoder: AEConfig,
    pub explainer: ExplainSettings,
    /// Attack rows drawn for the SHAP background.
    pub background_size: usize,
    /// Attack rows explained; `None` explains the background rows themselves.
    pub explain_count: Option<usize>,
    pub top_k: usize,
    pub split_fraction: f64,
    pub exclude_background_from_test: bool,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            data: DataSource::default(),
            autoencoder: AEConfig::default(),
            explainer: ExplainSettings::default(),
            background_size: 200,
            explain_count: None,
            top_k: 40,
            split_fraction: 0.67,
            exclude_background_from_test: false,
            out_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse("config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        // Relative data paths are taken relative to the config file.
        if let (DataSource::Csv { train, test, .. }, Some(dir)) = (&mut cfg.data, path.parent()) {
            for p in [train, test] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::parse("config", e))
    }

    pub fn validate(&self) -> Result<()> {
        self.autoencoder.validate()?;
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidArgument("split_fraction must lie in (0, 1)".into()));
        }
        if self.top_k == 0 || self.background_size == 0 || self.explainer.kmeans_k == 0 {
            return Err(Error::InvalidArgument(
                "top_k, background_size and kmeans_k must be positive".into(),
            ));
        }
        if self.explain_count == Some(0) {
            return Err(Error::InvalidArgument("explain_count must be positive".into()));
        }
        if let DataSource::Synth {
            n_features,
            n_informative,
            n_train_benign,
            n_attack,
            ..
        } = self.data
        {
            if n_informative == 0 || n_informative > n_features {
                return Err(Error::InvalidArgument("need 0 < n_informative <= n_features".into()));
            }
            if n_train_benign < 2 || n_attack == 0 {
                return Err(Error::InvalidArgument(
                    "synthetic data needs benign training rows and attacks".into(),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = None;
        let json = serde_json::to_vec(&canonical).unwrap_or_default();
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Autoencoder settings with the derived seed filled in.
    pub fn autoencoder_config(&self) -> AEConfig {
        AEConfig {
            seed: crate::rng::derive_seed(self.seed, "autoencoder"),
            ..self.autoencoder.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_settings() {
        let c = RunConfig::default();
        assert_eq!(c.background_size, 200);
        assert_eq!(c.top_k, 40);
        assert_eq!(c.split_fraction, 0.67);
        assert_eq!(c.explainer.kmeans_k, 10);
        assert_eq!(c.autoencoder, AEConfig::default());
        assert!(!c.exclude_background_from_test);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);

        let partial = RunConfig::from_toml(
            r#"
            seed = 9
            top_k = 10
            [data]
            kind = "csv"
            train = "monday.csv"
            test = "friday.csv"
            [autoencoder]
            epochs = 3
            "#,
        )
        .unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.autoencoder.epochs, 3);
        assert_eq!(partial.autoencoder.batch_size, 8192);
        match partial.data {
            DataSource::Csv {
                label_column,
                benign_label,
                ..
            } => {
                assert_eq!((label_column.as_str(), benign_label.as_str()), ("Label", "BENIGN"));
            }
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("split_fraction = 1.5").is_err());
    }

    #[test]
    fn hash_tracks_content_not_output_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = Some("/tmp/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
