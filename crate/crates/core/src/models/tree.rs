//! CART regression trees fit by exact greedy variance reduction.
//!
//! Shared by the boosted and bagged ensembles. Split search is
//! deterministic: features are scanned in ascending index order and
//! candidate thresholds (midpoints between consecutive distinct values)
//! in ascending value order, and a candidate replaces the incumbent only
//! on a strictly larger gain, so ties resolve to the lowest feature
//! index, then the lowest threshold.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use rand::Rng;

/// One tree node. `Split` children are indices into the tree's node
/// array; rows with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A fitted regression tree; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn depth_at(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + depth_at(nodes, *left).max(depth_at(nodes, *right))
                }
            }
        }
        depth_at(&self.nodes, 0)
    }
}

/// Tree-growing controls shared by both ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// L2 shrinkage on leaf values: leaf = sum(targets) / (count + l2).
    pub l2_leaf: f64,
}

/// Per-split feature sampling for bagged trees: draw `k` distinct
/// feature indices (ascending) from the given stream.
pub(crate) struct FeatureSampler<'a> {
    pub k: usize,
    pub p: usize,
    pub rng: &'a mut SeededRng,
}

impl FeatureSampler<'_> {
    /// Floyd's algorithm for a k-subset, returned sorted ascending so
    /// the deterministic tie-break order is preserved.
    fn draw(&mut self) -> Vec<usize> {
        let mut chosen = Vec::with_capacity(self.k);
        for j in self.p - self.k..self.p {
            let t = self.rng.gen_range(0..=j);
            if chosen.contains(&t) {
                chosen.push(j);
            } else {
                chosen.push(t);
            }
        }
        chosen.sort_unstable();
        chosen
    }
}

/// Fit a tree on `rows[indices]` against `targets[indices]`.
/// `indices` may repeat rows (bootstrap resamples).
pub(crate) fn fit_tree(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    params: &TreeParams,
    mut sampler: Option<FeatureSampler<'_>>,
) -> RegressionTree {
    assert!(!indices.is_empty(), "fit_tree: no rows");
    let p = rows[0].len();
    let mut nodes = Vec::new();
    grow(
        rows,
        targets,
        indices.to_vec(),
        params,
        &mut sampler,
        p,
        0,
        &mut nodes,
    );
    RegressionTree { nodes }
}

fn leaf_value(targets: &[f64], indices: &[usize], l2: f64) -> f64 {
    let sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    sum / (indices.len() as f64 + l2)
}

fn sse(targets: &[f64], indices: &[usize]) -> f64 {
    let n = indices.len() as f64;
    let sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    let sum_sq: f64 = indices.iter().map(|&i| targets[i] * targets[i]).sum();
    (sum_sq - sum * sum / n).max(0.0)
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Exact greedy search over every (feature, midpoint) candidate.
fn best_split(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: &[usize],
    min_leaf: usize,
    features: &[usize],
) -> Option<BestSplit> {
    let n = indices.len();
    if n < 2 * min_leaf {
        return None;
    }
    let sse_parent = sse(targets, indices);
    // Guard absorbs float noise so pure nodes never split.
    let guard = 1e-12 * (1.0 + sse_parent);
    let total_sum: f64 = indices.iter().map(|&i| targets[i]).sum();
    let total_sq: f64 = indices.iter().map(|&i| targets[i] * targets[i]).sum();

    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = Vec::with_capacity(n);
    for &feature in features {
        order.clear();
        order.extend_from_slice(indices);
        order.sort_unstable_by(|&a, &b| {
            rows[a][feature]
                .partial_cmp(&rows[b][feature])
                .expect("finite feature values")
        });
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for split_at in 1..n {
            let prev = order[split_at - 1];
            left_sum += targets[prev];
            left_sq += targets[prev] * targets[prev];
            let lo = rows[prev][feature];
            let hi = rows[order[split_at]][feature];
            if lo == hi {
                continue;
            }
            if split_at < min_leaf || n - split_at < min_leaf {
                continue;
            }
            let nl = split_at as f64;
            let nr = (n - split_at) as f64;
            let right_sum = total_sum - left_sum;
            let right_sq = total_sq - left_sq;
            let sse_l = (left_sq - left_sum * left_sum / nl).max(0.0);
            let sse_r = (right_sq - right_sum * right_sum / nr).max(0.0);
            let gain = sse_parent - sse_l - sse_r;
            if gain <= guard {
                continue;
            }
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(BestSplit {
                    feature,
                    threshold: lo + 0.5 * (hi - lo),
                    gain,
                });
            }
        }
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn grow(
    rows: &[Vec<f64>],
    targets: &[f64],
    indices: Vec<usize>,
    params: &TreeParams,
    sampler: &mut Option<FeatureSampler<'_>>,
    p: usize,
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let make_leaf = |nodes: &mut Vec<Node>, indices: &[usize]| {
        nodes.push(Node::Leaf {
            value: leaf_value(targets, indices, params.l2_leaf),
        });
        nodes.len() - 1
    };
    if depth >= params.max_depth {
        return make_leaf(nodes, &indices);
    }
    let all_features: Vec<usize>;
    let features: Vec<usize> = match sampler {
        Some(s) => s.draw(),
        None => {
            all_features = (0..p).collect();
            all_features
        }
    };
    let Some(split) = best_split(rows, targets, &indices, params.min_leaf, &features) else {
        return make_leaf(nodes, &indices);
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
        .iter()
        .partition(|&&i| rows[i][split.feature] <= split.threshold);
    let at = nodes.len();
    nodes.push(Node::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: 0,
        right: 0,
    });
    let left = grow(rows, targets, left_idx, params, sampler, p, depth + 1, nodes);
    let right = grow(rows, targets, right_idx, params, sampler, p, depth + 1, nodes);
    match &mut nodes[at] {
        Node::Split {
            left: l, right: r, ..
        } => {
            *l = left;
            *r = right;
        }
        Node::Leaf { .. } => unreachable!(),
    }
    at
}
