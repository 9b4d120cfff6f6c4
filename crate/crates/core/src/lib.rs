//! Autoencoder network-anomaly detection with KernelSHAP-driven unsupervised
//! feature selection.
//!
//! The crate trains a reconstruction autoencoder on benign flows, explains the
//! reconstruction error of attack flows with a KernelSHAP explainer, ranks
//! features by mean absolute Shapley value, and retrains a detector on the
//! top-ranked subset. [`pipeline`] ties the stages together and compares the
//! two detectors.

pub mod autoencoder;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod shap;

pub use error::{Error, Result, Stage};
