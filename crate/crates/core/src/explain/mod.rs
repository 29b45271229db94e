//! Shapley-value attributions for trained models.
//!
//! All three methods estimate the same quantity: interventional Shapley
//! values under a background-conditional value function, where a
//! coalition's value is the mean model output over background rows with
//! the coalition's features replaced by the explained sample's.
//!
//! * [`exact_shapley`] enumerates every coalition (feature count <= 15);
//! * [`tree_shap`] descends tree paths per background row and is
//!   mathematically identical to exact enumeration for tree ensembles;
//! * [`sampled_shapley`] samples feature permutations with antithetic
//!   pairs for wide feature sets, then enforces additivity and reports
//!   the pre-enforcement residual.
//!
//! On top of the per-sample attributions sit [`global_importance`]
//! (mean-|phi| ranking plus the beeswarm matrix), [`bootstrap_ci`]
//! (percentile intervals over dataset resamples), and
//! [`local_explanation`] (waterfall/force report data).

mod exact;
mod sampled;
mod tree;

use serde::{Deserialize, Serialize};

use crate::data::{fisher_yates, quantile_sorted, Dataset, Sample};
use crate::error::{Error, Result};
use crate::models::{ModelKind, TrainedModel};
use crate::rng::{derive_seed, rng_from_seed};

pub use exact::exact_shapley;
pub use sampled::sampled_shapley;
pub use tree::tree_shap;

/// Background rows kept by default when subsampling a dataset.
pub const DEFAULT_BACKGROUND_CAP: usize = 500;

/// Hard feature-count limit for exact coalition enumeration.
pub const MAX_EXACT_FEATURES: usize = 15;

/// Widest model [`default_method`] still explains exactly; beyond this
/// the default falls back to permutation sampling.
pub const DEFAULT_EXACT_DISPATCH_MAX: usize = 10;

pub const DEFAULT_PERMUTATIONS: usize = 2000;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Which estimator produced an explanation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMethod {
    Exact,
    Tree,
    Sampled,
}

impl std::fmt::Display for ShapMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShapMethod::Exact => "exact",
            ShapMethod::Tree => "tree",
            ShapMethod::Sampled => "sampled",
        })
    }
}

/// Reference rows the value function marginalizes over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSet {
    pub schema_digest: String,
    /// Raw (unscaled) feature rows.
    pub rows: Vec<Vec<f64>>,
}

impl BackgroundSet {
    /// Draw a background from a dataset: all rows when the dataset fits
    /// under the cap (default 500), otherwise a seeded subsample kept in
    /// original dataset order.
    pub fn from_dataset(dataset: &Dataset, cap: Option<usize>, seed: u64) -> Result<Self> {
        let cap = cap.unwrap_or(DEFAULT_BACKGROUND_CAP);
        if cap == 0 {
            return Err(Error::invalid("background: cap must be positive"));
        }
        if dataset.is_empty() {
            return Err(Error::invalid("background: empty dataset"));
        }
        let n = dataset.len();
        let rows = if n <= cap {
            dataset.samples.iter().map(|s| s.features.clone()).collect()
        } else {
            let mut idx: Vec<usize> = (0..n).collect();
            fisher_yates(&mut idx, &mut rng_from_seed(seed));
            let mut keep = idx[..cap].to_vec();
            keep.sort_unstable();
            keep.into_iter()
                .map(|i| dataset.samples[i].features.clone())
                .collect()
        };
        Ok(BackgroundSet {
            schema_digest: dataset.schema.digest(),
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Per-sample attribution vector with its audit fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_id: Option<String>,
    pub method: ShapMethod,
    /// Expected model output over the background.
    pub base_value: f64,
    pub prediction: f64,
    /// Attribution per schema feature; base + sum = prediction.
    pub phi: Vec<f64>,
    /// Pre-enforcement additivity gap (sampled method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    /// Optional per-feature [2.5th, 97.5th] percentile interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<Vec<[f64; 2]>>,
}

pub(crate) fn check_input(model: &TrainedModel, x: &[f64]) -> Result<()> {
    if x.len() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} features", model.n_features()),
            found: format!("{}", x.len()),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("explain: non-finite feature value"));
    }
    Ok(())
}

pub(crate) fn check_background(model: &TrainedModel, background: &BackgroundSet) -> Result<()> {
    if background.is_empty() {
        return Err(Error::Explain("empty background set".into()));
    }
    if background.schema_digest != model.schema_digest {
        return Err(Error::Explain(format!(
            "background schema digest {} does not match the model's {}",
            &background.schema_digest[..12.min(background.schema_digest.len())],
            &model.schema_digest[..12]
        )));
    }
    let p = model.n_features();
    if background.rows.iter().any(|r| r.len() != p) {
        return Err(Error::Explain(format!(
            "background row width differs from the model's {p} features"
        )));
    }
    Ok(())
}

/// Mean model output over the background rows.
pub(crate) fn mean_background_prediction(
    model: &TrainedModel,
    background: &BackgroundSet,
) -> Result<f64> {
    let mut total = 0.0;
    for b in &background.rows {
        total += model.predict(b)?;
    }
    Ok(total / background.rows.len() as f64)
}

/// The interventional value of a feature coalition: the mean model
/// output over background rows with the coalition's coordinates
/// replaced by `x`'s. The full set gives `predict(x)`; the empty set
/// gives the mean background prediction.
pub fn value_function(
    model: &TrainedModel,
    x: &[f64],
    subset: &[usize],
    background: &BackgroundSet,
) -> Result<f64> {
    check_background(model, background)?;
    check_input(model, x)?;
    let p = model.n_features();
    let mut seen = vec![false; p];
    for &i in subset {
        if i >= p {
            return Err(Error::invalid(format!(
                "value_function: feature index {i} out of range for {p} features"
            )));
        }
        if seen[i] {
            return Err(Error::invalid(format!(
                "value_function: duplicate feature index {i}"
            )));
        }
        seen[i] = true;
    }
    let mut total = 0.0;
    for b in &background.rows {
        let mut composite = b.clone();
        for &i in subset {
            composite[i] = x[i];
        }
        total += model.predict(&composite)?;
    }
    Ok(total / background.rows.len() as f64)
}

/// The estimator a model gets when the caller names none: tree descent
/// for tree ensembles, exact enumeration for narrow MLPs, permutation
/// sampling for wide ones.
pub fn default_method(model: &TrainedModel) -> ShapMethod {
    match model.kind() {
        ModelKind::Gbt | ModelKind::Rf => ShapMethod::Tree,
        ModelKind::Mlp => {
            if model.n_features() <= DEFAULT_EXACT_DISPATCH_MAX {
                ShapMethod::Exact
            } else {
                ShapMethod::Sampled
            }
        }
    }
}

/// Controls shared by the explanation entry points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    /// None picks [`default_method`] for the model.
    pub method: Option<ShapMethod>,
    /// Permutations drawn by the sampled method.
    pub n_permutations: usize,
    pub seed: u64,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            method: None,
            n_permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
        }
    }
}

/// Explain one feature vector with the chosen (or default) method.
pub fn explain_sample(
    model: &TrainedModel,
    sample_id: Option<&str>,
    x: &[f64],
    background: &BackgroundSet,
    options: &ExplainOptions,
) -> Result<ShapExplanation> {
    let method = options.method.unwrap_or_else(|| default_method(model));
    let mut explanation = match method {
        ShapMethod::Exact => exact_shapley(model, x, background)?,
        ShapMethod::Tree => tree_shap(model, x, background)?,
        ShapMethod::Sampled => {
            sampled_shapley(model, x, background, options.n_permutations, options.seed)?
        }
    };
    explanation.sample_id = sample_id.map(str::to_string);
    Ok(explanation)
}

/// One feature's aggregate importance, ordered within
/// [`GlobalImportance::features`] by descending `mean_abs_phi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_phi: f64,
    pub mean_phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

/// Dataset-wide attribution summary plus the full per-sample matrix
/// needed to render a beeswarm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalImportance {
    pub method: ShapMethod,
    #[serde(rename = "base")]
    pub base_value: f64,
    /// Schema feature indices sorted by mean |phi| descending
    /// (ties keep schema order); `features[i]` describes
    /// `feature_order[i]`.
    pub feature_order: Vec<usize>,
    pub features: Vec<FeatureImportance>,
    pub sample_ids: Vec<String>,
    /// Attribution per sample (row) and schema feature (column).
    pub phi_matrix: Vec<Vec<f64>>,
    /// Standardized feature values aligned with `phi_matrix`; warmer
    /// beeswarm tones mean higher values.
    pub value_matrix: Vec<Vec<f64>>,
}

impl GlobalImportance {
    /// Copy per-feature intervals (schema order) onto the ranked rows.
    pub fn attach_ci(&mut self, ci: &BootstrapCi) -> Result<()> {
        if ci.lower.len() != self.feature_order.len() {
            return Err(Error::invalid(format!(
                "attach_ci: {} intervals for {} features",
                ci.lower.len(),
                self.feature_order.len()
            )));
        }
        for (slot, &j) in self.features.iter_mut().zip(&self.feature_order) {
            slot.ci = Some([ci.lower[j], ci.upper[j]]);
        }
        Ok(())
    }
}

/// Explain every dataset sample, returning the shared base value and
/// the per-sample phi matrix (schema feature order).
fn compute_phi_matrix(
    model: &TrainedModel,
    dataset: &Dataset,
    background: &BackgroundSet,
    options: &ExplainOptions,
) -> Result<(ShapMethod, f64, Vec<Vec<f64>>)> {
    if dataset.is_empty() {
        return Err(Error::invalid("explain: empty dataset"));
    }
    let digest = dataset.schema.digest();
    if digest != model.schema_digest {
        return Err(Error::Explain(format!(
            "dataset schema digest {} does not match the model's {}",
            &digest[..12],
            &model.schema_digest[..12]
        )));
    }
    let method = options.method.unwrap_or_else(|| default_method(model));
    let mut base = 0.0;
    let mut matrix = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.samples.iter().enumerate() {
        // Sampled explanations draw independently per sample.
        let per_sample = ExplainOptions {
            method: Some(method),
            seed: derive_seed(options.seed, i as u64),
            ..*options
        };
        let e = explain_sample(model, Some(&s.sample_id), &s.features, background, &per_sample)?;
        base = e.base_value;
        matrix.push(e.phi);
    }
    Ok((method, base, matrix))
}

/// Attribution summary over a whole dataset. Features are ranked by
/// mean |phi|; the signed mean is kept alongside for auditing.
pub fn global_importance(
    model: &TrainedModel,
    dataset: &Dataset,
    background: &BackgroundSet,
    options: &ExplainOptions,
) -> Result<GlobalImportance> {
    let (method, base_value, phi_matrix) = compute_phi_matrix(model, dataset, background, options)?;
    let p = model.n_features();
    let n = dataset.len() as f64;
    let mut mean_abs = vec![0.0; p];
    let mut mean_signed = vec![0.0; p];
    for row in &phi_matrix {
        for (j, &v) in row.iter().enumerate() {
            mean_abs[j] += v.abs();
            mean_signed[j] += v;
        }
    }
    for j in 0..p {
        mean_abs[j] /= n;
        mean_signed[j] /= n;
    }
    let mut feature_order: Vec<usize> = (0..p).collect();
    feature_order.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .expect("finite importances")
            .then(a.cmp(&b))
    });
    let features = feature_order
        .iter()
        .map(|&j| FeatureImportance {
            feature: model.schema.features[j].name.clone(),
            mean_abs_phi: mean_abs[j],
            mean_phi: mean_signed[j],
            ci: None,
        })
        .collect();
    let value_matrix = dataset
        .samples
        .iter()
        .map(|s| model.scaler.transform_row(&s.features))
        .collect();
    Ok(GlobalImportance {
        method,
        base_value,
        feature_order,
        features,
        sample_ids: dataset.samples.iter().map(|s| s.sample_id.clone()).collect(),
        phi_matrix,
        value_matrix,
    })
}

/// Percentile bootstrap over dataset resamples of the per-feature mean
/// signed attribution (all vectors in schema feature order).
///
/// `lower <= mean_phi <= upper` holds on every configuration exercised
/// by this crate's tests; it is a property of bootstrap-mean
/// distributions rather than an enforced postcondition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub n_resamples: usize,
    pub seed: u64,
    /// Mean signed phi over the full dataset.
    pub full_mean_phi: Vec<f64>,
    /// Mean of the resample means.
    pub mean_phi: Vec<f64>,
    /// 2.5th percentile of the resample means.
    pub lower: Vec<f64>,
    /// 97.5th percentile of the resample means.
    pub upper: Vec<f64>,
}

/// Bootstrap the per-feature mean attribution: explanations are
/// computed once per sample, then `n_resamples` with-replacement
/// resamples of the dataset (child seed per resample) each contribute
/// one mean-phi vector; the interval is that vector set's empirical
/// [2.5th, 97.5th] percentile band.
pub fn bootstrap_ci(
    model: &TrainedModel,
    dataset: &Dataset,
    background: &BackgroundSet,
    n_resamples: usize,
    seed: u64,
    options: &ExplainOptions,
) -> Result<BootstrapCi> {
    if n_resamples < 2 {
        return Err(Error::invalid(format!(
            "bootstrap: need at least 2 resamples, got {n_resamples}"
        )));
    }
    let (_, _, phi_matrix) = compute_phi_matrix(model, dataset, background, options)?;
    let n = phi_matrix.len();
    let p = model.n_features();

    let mut full_mean_phi = vec![0.0; p];
    for row in &phi_matrix {
        for (j, &v) in row.iter().enumerate() {
            full_mean_phi[j] += v;
        }
    }
    for v in &mut full_mean_phi {
        *v /= n as f64;
    }

    let mut resample_means = vec![vec![0.0; n_resamples]; p];
    for r in 0..n_resamples {
        let mut rng = rng_from_seed(derive_seed(seed, r as u64));
        let mut acc = vec![0.0; p];
        for _ in 0..n {
            let row = &phi_matrix[rand::Rng::gen_range(&mut rng, 0..n)];
            for (j, &v) in row.iter().enumerate() {
                acc[j] += v;
            }
        }
        for (j, v) in acc.iter().enumerate() {
            resample_means[j][r] = v / n as f64;
        }
    }

    let mut mean_phi = vec![0.0; p];
    let mut lower = vec![0.0; p];
    let mut upper = vec![0.0; p];
    for j in 0..p {
        let mut sorted = resample_means[j].clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite attribution"));
        mean_phi[j] = resample_means[j].iter().sum::<f64>() / n_resamples as f64;
        lower[j] = quantile_sorted(&sorted, 0.025);
        upper[j] = quantile_sorted(&sorted, 0.975);
    }
    Ok(BootstrapCi {
        n_resamples,
        seed,
        full_mean_phi,
        mean_phi,
        lower,
        upper,
    })
}

/// One row of a waterfall/force report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalContribution {
    pub feature: String,
    pub phi: f64,
    /// Raw (unscaled) feature value of the explained sample.
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<[f64; 2]>,
}

/// Everything a waterfall or force plot needs for one sample: ranked
/// contributions and the cumulative trajectory from base to prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub sample_id: String,
    pub method: ShapMethod,
    #[serde(rename = "base")]
    pub base_value: f64,
    pub prediction: f64,
    /// Sorted by |phi| descending (ties keep schema order).
    pub contributions: Vec<LocalContribution>,
    /// `base`, then one cumulative point per contribution; the last
    /// point equals the prediction up to the method's additivity
    /// tolerance.
    pub trajectory: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

/// Explain one sample and arrange the result for rendering.
pub fn local_explanation(
    model: &TrainedModel,
    sample: &Sample,
    background: &BackgroundSet,
    options: &ExplainOptions,
) -> Result<LocalExplanation> {
    let e = explain_sample(
        model,
        Some(&sample.sample_id),
        &sample.features,
        background,
        options,
    )?;
    let p = e.phi.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| {
        e.phi[b]
            .abs()
            .partial_cmp(&e.phi[a].abs())
            .expect("finite attribution")
            .then(a.cmp(&b))
    });
    let contributions: Vec<LocalContribution> = order
        .iter()
        .map(|&j| LocalContribution {
            feature: model.schema.features[j].name.clone(),
            phi: e.phi[j],
            value: sample.features[j],
            ci: None,
        })
        .collect();
    let mut trajectory = Vec::with_capacity(p + 1);
    let mut at = e.base_value;
    trajectory.push(at);
    for c in &contributions {
        at += c.phi;
        trajectory.push(at);
    }
    Ok(LocalExplanation {
        sample_id: sample.sample_id.clone(),
        method: e.method,
        base_value: e.base_value,
        prediction: e.prediction,
        contributions,
        trajectory,
        residual: e.residual,
    })
}
