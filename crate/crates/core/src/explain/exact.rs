//! Exact Shapley values by full coalition enumeration.

use crate::error::{Error, Result};
use crate::models::TrainedModel;

use super::{check_background, check_input, BackgroundSet, ShapExplanation, ShapMethod, MAX_EXACT_FEATURES};

/// 0! through n! as f64; exact for n <= 22, far past the enumeration
/// limit here.
fn factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 1.0;
    out.push(acc);
    for k in 1..=n {
        acc *= k as f64;
        out.push(acc);
    }
    out
}

/// Exact interventional Shapley values, averaging every one of the
/// 2^p coalitions over the background. Rejects models wider than
/// [`MAX_EXACT_FEATURES`]; use the tree or sampled method there.
pub fn exact_shapley(
    model: &TrainedModel,
    x: &[f64],
    background: &BackgroundSet,
) -> Result<ShapExplanation> {
    check_background(model, background)?;
    check_input(model, x)?;
    let p = model.n_features();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::Explain(format!(
            "exact enumeration over {p} features needs 2^{p} coalitions; \
             use the tree or sampled method"
        )));
    }

    // v[mask] = mean over background rows of the model output on the
    // composite that takes x where the mask bit is set.
    let full = (1usize << p) - 1;
    let mut v = vec![0.0; 1 << p];
    let mut composite = vec![0.0; p];
    for b in &background.rows {
        for (mask, slot) in v.iter_mut().enumerate() {
            for i in 0..p {
                composite[i] = if mask >> i & 1 == 1 { x[i] } else { b[i] };
            }
            *slot += model.predict(&composite)?;
        }
    }
    let n_b = background.rows.len() as f64;
    for slot in &mut v {
        *slot /= n_b;
    }

    // phi_i = sum over coalitions S not containing i of
    //         |S|! (p - |S| - 1)! / p! * (v[S + i] - v[S]).
    let fact = factorials(p);
    let weight: Vec<f64> = (0..p).map(|s| fact[s] * fact[p - 1 - s] / fact[p]).collect();
    let mut phi = vec![0.0; p];
    // The full coalition leaves no feature to add, so it is skipped.
    for mask in 0..full {
        let w = weight[mask.count_ones() as usize];
        for (i, slot) in phi.iter_mut().enumerate() {
            if mask >> i & 1 == 0 {
                *slot += w * (v[mask | 1 << i] - v[mask]);
            }
        }
    }

    Ok(ShapExplanation {
        sample_id: None,
        method: ShapMethod::Exact,
        base_value: v[0],
        prediction: v[full],
        phi,
        residual: None,
        ci: None,
    })
}
