//! Regression models over scored feature datasets.
//!
//! Three interchangeable regressors predict a quality score from a
//! feature vector: gradient-boosted trees ([`GbtParams`]), a bagged
//! random forest ([`RfParams`]), and a multi-layer perceptron
//! ([`MlpParams`]). A [`TrainedModel`] bundles the fitted predictor with
//! the standardization scaler, the feature schema and its digest, and
//! the training seed, so a serialized model is a complete, reproducible
//! artifact.
//!
//! [`select`] adds the validation protocol on top: k-fold
//! cross-validated grid search on RMSE, final retraining, and held-out
//! test evaluation.

mod boost;
mod forest;
mod mlp;
mod select;
mod tree;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fit_scaler, Dataset, FeatureSchema, Scaler};
use crate::error::{Error, Result};
use crate::nn::MlpNet;

pub use boost::GbtParams;
pub use forest::RfParams;
pub use mlp::MlpParams;
pub use select::{
    cross_validate_grid, cv_folds, run_training_protocol, GridEvaluation, GridSearchResult,
    ProtocolOptions, ProtocolResult,
};
pub use tree::{Node, RegressionTree};

pub(crate) use boost::{fit_gbt, predict_gbt};
pub(crate) use forest::{fit_rf, predict_rf};
pub(crate) use mlp::fit_mlp;

/// The three regressor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbt,
    Rf,
    Mlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gbt => "gbt",
            ModelKind::Rf => "rf",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbt" => Ok(ModelKind::Gbt),
            "rf" => Ok(ModelKind::Rf),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::invalid(format!(
                "unknown model kind {other:?} (expected gbt, rf, or mlp)"
            ))),
        }
    }
}

/// Hyperparameters for one model configuration, tagged by kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelParams {
    Gbt(GbtParams),
    Rf(RfParams),
    Mlp(MlpParams),
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Gbt(_) => ModelKind::Gbt,
            ModelParams::Rf(_) => ModelKind::Rf,
            ModelParams::Mlp(_) => ModelKind::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelParams::Gbt(p) => p.validate(),
            ModelParams::Rf(p) => p.validate(),
            ModelParams::Mlp(p) => p.validate(),
        }
    }

    /// The kind's default configuration.
    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Gbt => ModelParams::Gbt(GbtParams::default()),
            ModelKind::Rf => ModelParams::Rf(RfParams::default()),
            ModelKind::Mlp => ModelParams::Mlp(MlpParams::default()),
        }
    }
}

/// The fitted predictor, tagged by kind like [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelPayload {
    Gbt {
        params: GbtParams,
        base_score: f64,
        trees: Vec<RegressionTree>,
    },
    Rf {
        params: RfParams,
        trees: Vec<RegressionTree>,
    },
    Mlp {
        params: MlpParams,
        net: MlpNet,
        loss_trace: Vec<f64>,
    },
}

/// A trained regressor plus everything needed to reproduce and apply it:
/// schema (with digest), standardization scaler, and training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub schema: FeatureSchema,
    pub schema_digest: String,
    pub scaler: Scaler,
    pub seed: u64,
    #[serde(flatten)]
    pub payload: ModelPayload,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match &self.payload {
            ModelPayload::Gbt { .. } => ModelKind::Gbt,
            ModelPayload::Rf { .. } => ModelKind::Rf,
            ModelPayload::Mlp { .. } => ModelKind::Mlp,
        }
    }

    /// The configuration this model was trained with.
    pub fn params(&self) -> ModelParams {
        match &self.payload {
            ModelPayload::Gbt { params, .. } => ModelParams::Gbt(params.clone()),
            ModelPayload::Rf { params, .. } => ModelParams::Rf(params.clone()),
            ModelPayload::Mlp { params, .. } => ModelParams::Mlp(params.clone()),
        }
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    /// Predict from a raw (unscaled) feature vector.
    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.schema.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", self.schema.len()),
                found: format!("{}", features.len()),
            });
        }
        if let Some(j) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "predict: feature {:?} is not finite",
                self.schema.features[j].name
            )));
        }
        Ok(self.predict_scaled(&self.scaler.transform_row(features)))
    }

    /// Predict from an already-standardized row (no validation).
    pub(crate) fn predict_scaled(&self, z: &[f64]) -> f64 {
        match &self.payload {
            ModelPayload::Gbt {
                params,
                base_score,
                trees,
            } => predict_gbt(*base_score, params.learning_rate, trees, z),
            ModelPayload::Rf { trees, .. } => predict_rf(trees, z),
            ModelPayload::Mlp { net, .. } => net.forward(z)[0],
        }
    }

    /// Predict every sample of a dataset sharing this model's schema.
    pub fn predict_dataset(&self, dataset: &Dataset) -> Result<Vec<f64>> {
        let digest = dataset.schema.digest();
        if digest != self.schema_digest {
            return Err(Error::DimensionMismatch {
                expected: format!("schema digest {}", &self.schema_digest[..12]),
                found: format!("schema digest {}", &digest[..12]),
            });
        }
        dataset
            .samples
            .iter()
            .map(|s| self.predict(&s.features))
            .collect()
    }
}

/// Minimum dataset size accepted by the public trainers.
const MIN_TRAIN_SAMPLES: usize = 5;

/// Train one configuration with a caller-supplied scaler (used by the
/// protocol to control where standardization statistics come from).
pub fn train_model_with_scaler(
    train: &Dataset,
    params: &ModelParams,
    scaler: &Scaler,
    seed: u64,
) -> Result<TrainedModel> {
    params.validate()?;
    if train.len() < MIN_TRAIN_SAMPLES {
        return Err(Error::invalid(format!(
            "training requires at least {MIN_TRAIN_SAMPLES} samples, got {}",
            train.len()
        )));
    }
    if scaler.len() != train.schema.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("scaler over {} features", train.schema.len()),
            found: format!("scaler over {} features", scaler.len()),
        });
    }
    let rows: Vec<Vec<f64>> = train
        .samples
        .iter()
        .map(|s| scaler.transform_row(&s.features))
        .collect();
    let targets = train.scores();
    let payload = match params {
        ModelParams::Gbt(p) => {
            let (base_score, trees) = fit_gbt(&rows, &targets, p)?;
            ModelPayload::Gbt {
                params: p.clone(),
                base_score,
                trees,
            }
        }
        ModelParams::Rf(p) => ModelPayload::Rf {
            params: p.clone(),
            trees: fit_rf(&rows, &targets, p, seed)?,
        },
        ModelParams::Mlp(p) => {
            let (net, loss_trace) = fit_mlp(&rows, &targets, p, seed)?;
            ModelPayload::Mlp {
                params: p.clone(),
                net,
                loss_trace,
            }
        }
    };
    Ok(TrainedModel {
        schema: train.schema.clone(),
        schema_digest: train.schema.digest(),
        scaler: scaler.clone(),
        seed,
        payload,
    })
}

/// Train one configuration, fitting the scaler on `train` itself.
pub fn train_model(train: &Dataset, params: &ModelParams, seed: u64) -> Result<TrainedModel> {
    let scaler = fit_scaler(train)?;
    train_model_with_scaler(train, params, &scaler, seed)
}

pub fn train_gbt(train: &Dataset, params: &GbtParams, seed: u64) -> Result<TrainedModel> {
    train_model(train, &ModelParams::Gbt(params.clone()), seed)
}

pub fn train_rf(train: &Dataset, params: &RfParams, seed: u64) -> Result<TrainedModel> {
    train_model(train, &ModelParams::Rf(params.clone()), seed)
}

pub fn train_mlp(train: &Dataset, params: &MlpParams, seed: u64) -> Result<TrainedModel> {
    train_model(train, &ModelParams::Mlp(params.clone()), seed)
}

pub fn save_model(path: impl AsRef<Path>, model: &TrainedModel) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(model).expect("model serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// The stock hyperparameter grid searched for a kind when the caller
/// supplies none. Grid order is part of the contract: mean-RMSE ties
/// resolve to the earliest entry.
pub fn default_grid(kind: ModelKind) -> Vec<ModelParams> {
    match kind {
        ModelKind::Gbt => {
            let mut grid = Vec::with_capacity(18);
            for &max_depth in &[2usize, 3, 4] {
                for &learning_rate in &[0.05, 0.1, 0.3] {
                    for &n_trees in &[100usize, 300] {
                        grid.push(ModelParams::Gbt(GbtParams {
                            n_trees,
                            max_depth,
                            learning_rate,
                            ..GbtParams::default()
                        }));
                    }
                }
            }
            grid
        }
        ModelKind::Rf => {
            let mut grid = Vec::with_capacity(4);
            for &n_trees in &[200usize, 500] {
                for &min_leaf in &[1usize, 5] {
                    grid.push(ModelParams::Rf(RfParams {
                        n_trees,
                        min_leaf,
                        ..RfParams::default()
                    }));
                }
            }
            grid
        }
        ModelKind::Mlp => {
            let mut grid = Vec::with_capacity(4);
            for &width in &[16usize, 32] {
                for &learning_rate in &[1e-3, 1e-2] {
                    grid.push(ModelParams::Mlp(MlpParams {
                        hidden_widths: vec![width],
                        learning_rate,
                        ..MlpParams::default()
                    }));
                }
            }
            grid
        }
    }
}
