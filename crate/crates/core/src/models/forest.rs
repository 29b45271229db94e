//! Random forest: bagged CART trees with per-split feature subsampling.
//!
//! Each tree draws a bootstrap resample (n rows with replacement) and
//! considers a fresh uniform subset of features at every split (default
//! ceil(p/3)). Tree seeds derive from (seed, tree index), so the forest
//! is independent of training order.

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, FeatureSampler, RegressionTree, TreeParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features considered per split; None means ceil(p/3).
    pub feature_subsample: Option<usize>,
    /// Disabled only by tests that need a bagging-free reduction.
    pub bootstrap: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            n_trees: 200,
            max_depth: 16,
            min_leaf: 1,
            feature_subsample: None,
            bootstrap: true,
        }
    }
}

impl RfParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("rf: n_trees must be at least 1"));
        }
        if self.max_depth == 0 {
            return Err(Error::invalid("rf: max_depth must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("rf: min_leaf must be at least 1"));
        }
        if self.feature_subsample == Some(0) {
            return Err(Error::invalid("rf: feature_subsample must be at least 1"));
        }
        Ok(())
    }
}

/// Fit on standardized rows.
pub(crate) fn fit_rf(
    rows: &[Vec<f64>],
    targets: &[f64],
    params: &RfParams,
    seed: u64,
) -> Result<Vec<RegressionTree>> {
    params.validate()?;
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "rf: need at least 2 training samples, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let p = rows[0].len();
    let k = params.feature_subsample.unwrap_or(p.div_ceil(3)).min(p);
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        l2_leaf: 0.0,
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = rng_from_seed(derive_seed(seed, t as u64));
        let indices: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let sampler = (k < p).then_some(FeatureSampler {
            k,
            p,
            rng: &mut rng,
        });
        trees.push(fit_tree(rows, targets, &indices, &tree_params, sampler));
    }
    Ok(trees)
}

/// Bagged prediction: mean over the trees.
pub(crate) fn predict_rf(trees: &[RegressionTree], row: &[f64]) -> f64 {
    trees.iter().map(|t| t.predict(row)).sum::<f64>() / trees.len() as f64
}
