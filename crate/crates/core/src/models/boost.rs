//! Gradient boosting with squared loss: trees fit sequentially to the
//! residuals of the running prediction, scaled by a learning rate around
//! a mean base score. With squared loss, second-order boosting reduces
//! to exactly this residual fitting plus L2 leaf shrinkage.

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, RegressionTree, TreeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub l2_leaf: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 300,
            max_depth: 3,
            learning_rate: 0.1,
            min_leaf: 1,
            l2_leaf: 0.0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        // n_trees may be 0: the model degenerates to the base score.
        if self.max_depth == 0 {
            return Err(Error::invalid("gbt: max_depth must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("gbt: learning rate must be positive"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("gbt: min_leaf must be at least 1"));
        }
        if !(self.l2_leaf >= 0.0) {
            return Err(Error::invalid("gbt: l2_leaf must be non-negative"));
        }
        Ok(())
    }
}

/// Fit on standardized rows. Returns the base score and the tree rounds.
pub(crate) fn fit_gbt(
    rows: &[Vec<f64>],
    targets: &[f64],
    params: &GbtParams,
) -> Result<(f64, Vec<RegressionTree>)> {
    params.validate()?;
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "gbt: need at least 2 training samples, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let base = targets.iter().sum::<f64>() / n as f64;
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        l2_leaf: params.l2_leaf,
    };
    let indices: Vec<usize> = (0..n).collect();
    let mut predictions = vec![base; n];
    let mut residuals: Vec<f64> = targets.iter().zip(&predictions).map(|(y, p)| y - p).collect();
    let mut trees = Vec::with_capacity(params.n_trees);
    for _ in 0..params.n_trees {
        let tree = fit_tree(rows, &residuals, &indices, &tree_params, None);
        for i in 0..n {
            predictions[i] += params.learning_rate * tree.predict(&rows[i]);
            residuals[i] = targets[i] - predictions[i];
        }
        trees.push(tree);
    }
    Ok((base, trees))
}

/// Boosted prediction on a standardized row.
pub(crate) fn predict_gbt(
    base: f64,
    learning_rate: f64,
    trees: &[RegressionTree],
    row: &[f64],
) -> f64 {
    base + learning_rate * trees.iter().map(|t| t.predict(row)).sum::<f64>()
}
