//! Multi-dimensional interpreting-quality assessment.
//!
//! This crate turns interpreted speech into calibrated quality predictions
//! and explains them. It covers the full pipeline:
//!
//! * per-dimension feature extraction — temporal fluency features from
//!   time-aligned transcripts ([`fluency`]), chrF plus ingested neural
//!   metrics for fidelity ([`fidelity`]), and syntactic/error/collocation
//!   features for target-language quality ([`tlqual`]);
//! * conditional-VAE data augmentation to balance skewed score
//!   distributions ([`augment`]);
//! * regression model training with cross-validated grid search
//!   ([`models`]) and a six-metric evaluation suite ([`eval`]);
//! * exact, tree-path, and sampled Shapley explanations with bootstrap
//!   confidence intervals ([`explain`]) and SVG report rendering
//!   ([`plot`]);
//! * a deterministic end-to-end pipeline with a digest manifest
//!   ([`pipeline`]) and a synthetic corpus generator ([`synth`]).
//!
//! Every stochastic operation takes an explicit 64-bit seed (see [`rng`]);
//! given equal inputs and seeds, all artifacts are byte-identical.

pub mod audio;
pub mod augment;
pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod fidelity;
pub mod fluency;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod synth;
pub mod tlqual;

pub use error::{Error, Result};
