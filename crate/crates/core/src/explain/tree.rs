//! Interventional Shapley values for tree ensembles.
//!
//! For one tree and one background row, the coalition value is the leaf
//! reached by the composite input. Descending the tree once per
//! background row while tracking which distinguishing features were
//! taken from the sample (`x_mask`) versus the background (`r_mask`)
//! visits every leaf a composite can reach: a leaf is reached exactly
//! when the coalition contains all of its x-features and none of its
//! r-features. That indicator game has a closed-form Shapley value,
//! so each leaf contributes
//!
//! * `+value / (kx * C(kx + kr, kx))` to each of its `kx` x-features,
//! * `-value / (kr * C(kx + kr, kr))` to each of its `kr` r-features,
//!
//! and summing leaves reproduces exact enumeration without the 2^p
//! cost. Attributions are averaged over background rows and scaled by
//! the ensemble's combination rule (learning rate or tree average).

use crate::error::{Error, Result};
use crate::models::{ModelPayload, Node, TrainedModel};

use super::{
    check_background, check_input, mean_background_prediction, BackgroundSet, ShapExplanation,
    ShapMethod,
};

/// Pascal's triangle rows 0..=n.
fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let mut row = vec![1.0; k + 1];
        for j in 1..k {
            row[j] = rows[k - 1][j - 1] + rows[k - 1][j];
        }
        rows.push(row);
    }
    rows
}

fn each_bit(mask: u64, mut f: impl FnMut(usize)) {
    let mut m = mask;
    while m != 0 {
        f(m.trailing_zeros() as usize);
        m &= m - 1;
    }
}

fn descend(
    nodes: &[Node],
    at: usize,
    zx: &[f64],
    zb: &[f64],
    x_mask: u64,
    r_mask: u64,
    binom: &[Vec<f64>],
    phi: &mut [f64],
) {
    match &nodes[at] {
        Node::Leaf { value } => {
            let kx = x_mask.count_ones() as usize;
            let kr = r_mask.count_ones() as usize;
            if kx > 0 {
                let att = value / (kx as f64 * binom[kx + kr][kx]);
                each_bit(x_mask, |i| phi[i] += att);
            }
            if kr > 0 {
                let att = value / (kr as f64 * binom[kx + kr][kr]);
                each_bit(r_mask, |i| phi[i] -= att);
            }
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let x_next = if zx[*feature] <= *threshold { *left } else { *right };
            let r_next = if zb[*feature] <= *threshold { *left } else { *right };
            if x_next == r_next {
                descend(nodes, x_next, zx, zb, x_mask, r_mask, binom, phi);
            } else {
                let bit = 1u64 << *feature;
                if x_mask & bit != 0 {
                    // Already committed to the sample's side.
                    descend(nodes, x_next, zx, zb, x_mask, r_mask, binom, phi);
                } else if r_mask & bit != 0 {
                    descend(nodes, r_next, zx, zb, x_mask, r_mask, binom, phi);
                } else {
                    descend(nodes, x_next, zx, zb, x_mask | bit, r_mask, binom, phi);
                    descend(nodes, r_next, zx, zb, x_mask, r_mask | bit, binom, phi);
                }
            }
        }
    }
}

/// Interventional Shapley values for a tree-ensemble model, identical
/// to [`super::exact_shapley`] up to float summation order but linear
/// in tree size instead of exponential in feature count.
pub fn tree_shap(
    model: &TrainedModel,
    x: &[f64],
    background: &BackgroundSet,
) -> Result<ShapExplanation> {
    check_background(model, background)?;
    check_input(model, x)?;
    let (trees, scale) = match &model.payload {
        ModelPayload::Gbt { params, trees, .. } => (trees.as_slice(), params.learning_rate),
        ModelPayload::Rf { trees, .. } => (trees.as_slice(), 1.0 / trees.len().max(1) as f64),
        ModelPayload::Mlp { .. } => {
            return Err(Error::Explain(
                "tree attributions need a tree-ensemble model; \
                 use the exact or sampled method"
                    .into(),
            ))
        }
    };
    let p = model.n_features();
    if p > 64 {
        return Err(Error::Explain(format!(
            "tree attribution masks support at most 64 features, got {p}"
        )));
    }

    let zx = model.scaler.transform_row(x);
    let binom = binomial_table(p);
    let mut phi = vec![0.0; p];
    for b in &background.rows {
        let zb = model.scaler.transform_row(b);
        for tree in trees {
            descend(&tree.nodes, 0, &zx, &zb, 0, 0, &binom, &mut phi);
        }
    }
    let norm = scale / background.rows.len() as f64;
    for v in &mut phi {
        *v *= norm;
    }

    Ok(ShapExplanation {
        sample_id: None,
        method: ShapMethod::Tree,
        base_value: mean_background_prediction(model, background)?,
        prediction: model.predict(x)?,
        phi,
        residual: None,
        ci: None,
    })
}

#[cfg(test)]
mod tests {
    use super::super::exact_shapley;
    use super::super::test_support::*;
    use super::*;
    use crate::models::test_support::toy_dataset;
    use crate::models::{
        train_gbt, train_mlp, train_rf, GbtParams, MlpParams, RegressionTree, RfParams,
    };

    fn worked_tree() -> RegressionTree {
        RegressionTree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.5,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: 0.0 },
                Node::Split {
                    feature: 1,
                    threshold: 0.5,
                    left: 3,
                    right: 4,
                },
                Node::Leaf { value: 2.0 },
                Node::Leaf { value: 10.0 },
            ],
        }
    }

    #[test]
    fn hand_worked_two_feature_case() {
        let model = handmade_ensemble(2, vec![worked_tree()]);
        let background = background_of(&model, vec![vec![0.0, 0.0]]);
        let e = tree_shap(&model, &[1.0, 1.0], &background).unwrap();
        assert!((e.phi[0] - 6.0).abs() < 1e-12);
        assert!((e.phi[1] - 4.0).abs() < 1e-12);
        assert_eq!(e.base_value, 0.0);
        assert_eq!(e.prediction, 10.0);

        let brute = exact_shapley(&model, &[1.0, 1.0], &background).unwrap();
        assert!((e.phi[0] - brute.phi[0]).abs() < 1e-12);
        assert!((e.phi[1] - brute.phi[1]).abs() < 1e-12);
    }

    /// The descent must agree with full enumeration on trained
    /// ensembles of both kinds across widths and seeds.
    #[test]
    fn matches_exact_enumeration_on_trained_ensembles() {
        for &(p, seed) in &[(3usize, 80u64), (5, 81), (8, 82)] {
            let data = toy_dataset(30, p, 0.3, seed);
            let background = BackgroundSet::from_dataset(&data, Some(12), 1).unwrap();
            let gbt = train_gbt(
                &data,
                &GbtParams {
                    n_trees: 20,
                    max_depth: 3,
                    ..GbtParams::default()
                },
                seed,
            )
            .unwrap();
            let rf = train_rf(
                &data,
                &RfParams {
                    n_trees: 10,
                    max_depth: 6,
                    ..RfParams::default()
                },
                seed,
            )
            .unwrap();
            for model in [&gbt, &rf] {
                for s in data.samples.iter().take(4) {
                    let fast = tree_shap(model, &s.features, &background).unwrap();
                    let brute = exact_shapley(model, &s.features, &background).unwrap();
                    for j in 0..p {
                        assert!(
                            (fast.phi[j] - brute.phi[j]).abs() < 1e-9,
                            "p={p} seed={seed} feature {j}: {} vs {}",
                            fast.phi[j],
                            brute.phi[j]
                        );
                    }
                    assert_eq!(fast.base_value, brute.base_value);
                    assert!((fast.prediction - brute.prediction).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_tree_attributes_nothing() {
        let model = handmade_ensemble(
            2,
            vec![RegressionTree {
                nodes: vec![Node::Leaf { value: 3.0 }],
            }],
        );
        let background = background_of(&model, vec![vec![0.0, 0.0], vec![5.0, -1.0]]);
        let e = tree_shap(&model, &[9.0, 9.0], &background).unwrap();
        assert_eq!(e.phi, vec![0.0, 0.0]);
        assert_eq!(e.base_value, 3.0);
        assert_eq!(e.prediction, 3.0);
    }

    #[test]
    fn unused_features_get_exactly_zero() {
        let model = stump_model(3, 0, 0.5, -1.0, 1.0);
        let background = background_of(
            &model,
            vec![vec![0.0, 7.0, -3.0], vec![1.0, 2.0, 4.0]],
        );
        let e = tree_shap(&model, &[0.9, -5.0, 11.0], &background).unwrap();
        assert_eq!(e.phi[1], 0.0);
        assert_eq!(e.phi[2], 0.0);
    }

    /// A path that tests the same feature twice stays consistent with
    /// the composite semantics: once a side is chosen, later splits on
    /// that feature follow the same side.
    #[test]
    fn repeated_feature_on_a_path() {
        let model = handmade_ensemble(
            1,
            vec![RegressionTree {
                nodes: vec![
                    Node::Split {
                        feature: 0,
                        threshold: 0.0,
                        left: 1,
                        right: 2,
                    },
                    Node::Leaf { value: -5.0 },
                    Node::Split {
                        feature: 0,
                        threshold: 1.5,
                        left: 3,
                        right: 4,
                    },
                    Node::Leaf { value: 2.0 },
                    Node::Leaf { value: 7.0 },
                ],
            }],
        );
        let background = background_of(&model, vec![vec![-1.0]]);
        let e = tree_shap(&model, &[1.0], &background).unwrap();
        // One feature carries the whole gap: f(x) - f(r) = 2 - (-5).
        assert_eq!(e.phi, vec![7.0]);

        let brute = exact_shapley(&model, &[1.0], &background).unwrap();
        assert_eq!(brute.phi, vec![7.0]);
    }

    /// Attribution is linear across boosted trees and scales with the
    /// learning rate.
    #[test]
    fn boosting_combines_per_tree_attributions() {
        let t1 = worked_tree();
        let t2 = RegressionTree {
            nodes: vec![
                Node::Split {
                    feature: 1,
                    threshold: 0.2,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { value: 1.0 },
                Node::Leaf { value: -2.0 },
            ],
        };
        let both = handmade_ensemble(2, vec![t1.clone(), t2.clone()]);
        let first = handmade_ensemble(2, vec![t1]);
        let second = handmade_ensemble(2, vec![t2]);
        let background = background_of(&both, vec![vec![0.0, 0.0], vec![2.0, 0.1]]);
        let x = [1.0, 1.0];

        let e_both = tree_shap(&both, &x, &background).unwrap();
        let e_first = tree_shap(&first, &x, &background).unwrap();
        let e_second = tree_shap(&second, &x, &background).unwrap();
        for j in 0..2 {
            let combined = e_first.phi[j] + e_second.phi[j];
            assert!((e_both.phi[j] - combined).abs() < 1e-12);
        }

        let mut damped = both.clone();
        if let ModelPayload::Gbt { params, .. } = &mut damped.payload {
            params.learning_rate = 0.1;
        }
        let e_damped = tree_shap(&damped, &x, &background).unwrap();
        for j in 0..2 {
            assert!((e_damped.phi[j] - 0.1 * e_both.phi[j]).abs() < 1e-12);
        }
    }

    /// A forest averages per-tree attributions.
    #[test]
    fn forest_averages_per_tree_attributions() {
        let t1 = worked_tree();
        let t2 = stump_model(2, 1, 0.5, 0.0, 4.0);
        let t2 = match &t2.payload {
            ModelPayload::Gbt { trees, .. } => trees[0].clone(),
            _ => unreachable!(),
        };
        let schema = toy_schema(2);
        let rf = TrainedModel {
            schema_digest: schema.digest(),
            schema,
            scaler: crate::data::Scaler::identity(2),
            seed: 0,
            payload: ModelPayload::Rf {
                params: RfParams::default(),
                trees: vec![t1.clone(), t2.clone()],
            },
        };
        let first = handmade_ensemble(2, vec![t1]);
        let second = handmade_ensemble(2, vec![t2]);
        let background = background_of(&rf, vec![vec![0.0, 0.0], vec![0.4, 0.9]]);
        let x = [1.0, 1.0];

        let e_rf = tree_shap(&rf, &x, &background).unwrap();
        let e1 = tree_shap(&first, &x, &background).unwrap();
        let e2 = tree_shap(&second, &x, &background).unwrap();
        for j in 0..2 {
            let avg = (e1.phi[j] + e2.phi[j]) / 2.0;
            assert!((e_rf.phi[j] - avg).abs() < 1e-12);
        }

        let brute = exact_shapley(&rf, &x, &background).unwrap();
        for j in 0..2 {
            assert!((e_rf.phi[j] - brute.phi[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_network_models() {
        let data = toy_dataset(12, 2, 0.2, 83);
        let mlp = train_mlp(
            &data,
            &MlpParams {
                hidden_widths: vec![3],
                epochs: 2,
                ..MlpParams::default()
            },
            1,
        )
        .unwrap();
        let background = BackgroundSet::from_dataset(&data, None, 0).unwrap();
        let err = tree_shap(&mlp, &data.samples[0].features, &background).unwrap_err();
        assert_eq!(err.code(), "explain");
        assert!(err.to_string().contains("sampled"));
    }

    #[test]
    fn attributions_sum_to_prediction_minus_base() {
        let data = toy_dataset(40, 5, 0.3, 84);
        let model = train_gbt(
            &data,
            &GbtParams {
                n_trees: 40,
                ..GbtParams::default()
            },
            3,
        )
        .unwrap();
        let background = BackgroundSet::from_dataset(&data, Some(20), 2).unwrap();
        for s in data.samples.iter().take(8) {
            let e = tree_shap(&model, &s.features, &background).unwrap();
            let total: f64 = e.phi.iter().sum();
            assert!((e.base_value + total - e.prediction).abs() < 1e-9);
        }
    }
}
