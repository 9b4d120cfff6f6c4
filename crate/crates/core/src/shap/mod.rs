//! KernelSHAP over the autoencoder reconstruction-error game.
//!
//! The value of a coalition `S` is `(1/d) * E_b[RE(z)]`, where the hybrid
//! `z` takes feature `i` from the explained instance when `i ∈ S` and from a
//! background point `b` otherwise, and the expectation runs over a weighted
//! background summarized by k-means. Shapley values come from the
//! Shapley-kernel weighted regression with the empty and grand coalitions
//! imposed as equality constraints.

mod coalition;
mod exact;
mod explain;
mod game;
mod kmeans;

pub use coalition::{
    enumerate_coalitions, enumerate_weighted, sample_coalitions, shapley_kernel_weight, Coalition, KernelWeight,
    WeightedCoalition, EXACT_LIMIT,
};
pub use exact::brute_force_shapley;
pub use explain::{
    explain_batch, explain_instance, explain_rows, kernel_shap, read_explanations, write_explanations, ExplainMode,
    ExplainerConfig, ShapExplanation, ValueScale,
};
pub use game::{value_function, CoalitionGame, LinearGame, ReconstructionGame};
pub use kmeans::{kmeans_summarize, BackgroundSet};
