//! Model selection: k-fold cross-validated grid search on RMSE, then
//! the full train/validate/test protocol.
//!
//! Fold assignment is drawn once per search and shared by every grid
//! configuration, so configurations are compared on identical splits.
//! All randomness derives from the caller's seed: the protocol uses
//! child seeds for the split, the search, and the final retrain, and
//! the search derives one child seed per (configuration, fold) pair, so
//! results never depend on evaluation order.

use serde::{Deserialize, Serialize};

use crate::data::{fisher_yates, fit_scaler, Dataset, Sample, Scaler, ScalerMode};
use crate::error::{Error, Result};
use crate::eval::{evaluate, regression_errors, EvalProvenance, EvalReport};
use crate::models::{train_model_with_scaler, ModelParams, TrainedModel};
use crate::rng::{derive_seed, rng_from_seed};

/// Cross-validation outcome for one grid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEvaluation {
    pub params: ModelParams,
    pub fold_rmse: Vec<f64>,
    pub mean_rmse: f64,
}

/// All grid evaluations plus the index of the selected configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub evaluations: Vec<GridEvaluation>,
    /// Index into `evaluations`; minimum mean RMSE, earliest on ties.
    pub selected: usize,
    pub k: usize,
    pub seed: u64,
}

impl GridSearchResult {
    pub fn selected_params(&self) -> &ModelParams {
        &self.evaluations[self.selected].params
    }

    pub fn selected_mean_rmse(&self) -> f64 {
        self.evaluations[self.selected].mean_rmse
    }
}

/// Assign `n` samples to `k` validation folds.
///
/// A seeded permutation is cut into k blocks whose sizes differ by at
/// most one (the first `n mod k` folds are larger). Each fold lists its
/// sample indices in ascending order. Folds partition `0..n`.
pub fn cv_folds(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid(format!("cv: k must be at least 2, got {k}")));
    }
    if n < k {
        return Err(Error::invalid(format!(
            "cv: {n} samples cannot fill {k} folds"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    fisher_yates(&mut perm, &mut rng_from_seed(seed));
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut at = 0;
    for i in 0..k {
        let size = base + usize::from(i < extra);
        let mut fold = perm[at..at + size].to_vec();
        at += size;
        fold.sort_unstable();
        folds.push(fold);
    }
    Ok(folds)
}

/// One fold's materialized training set, held-out rows, and scaler.
struct Fold {
    train: Dataset,
    val_features: Vec<Vec<f64>>,
    val_scores: Vec<f64>,
    scaler: Scaler,
}

fn build_folds(train: &Dataset, k: usize, seed: u64, fixed: Option<&Scaler>) -> Result<Vec<Fold>> {
    let n = train.len();
    let assignments = cv_folds(n, k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for fold_idx in assignments {
        let mut in_fold = vec![false; n];
        for &i in &fold_idx {
            in_fold[i] = true;
        }
        let fold_train_samples: Vec<Sample> = train
            .samples
            .iter()
            .enumerate()
            .filter(|(i, _)| !in_fold[*i])
            .map(|(_, s)| s.clone())
            .collect();
        let fold_train = Dataset {
            schema: train.schema.clone(),
            samples: fold_train_samples,
            provenance: train.provenance,
        };
        let scaler = match fixed {
            Some(s) => s.clone(),
            None => fit_scaler(&fold_train)?,
        };
        folds.push(Fold {
            val_features: fold_idx
                .iter()
                .map(|&i| train.samples[i].features.clone())
                .collect(),
            val_scores: fold_idx.iter().map(|&i| train.samples[i].score).collect(),
            train: fold_train,
            scaler,
        });
    }
    Ok(folds)
}

/// Evaluate every grid configuration by k-fold cross-validation on
/// RMSE and select the minimum (earliest grid entry on ties).
///
/// `fixed_scaler` standardizes every fold when given; otherwise each
/// fold fits its own scaler on its training part, keeping validation
/// rows out of the statistics.
pub fn cross_validate_grid(
    train: &Dataset,
    grid: &[ModelParams],
    k: usize,
    seed: u64,
    fixed_scaler: Option<&Scaler>,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::invalid("cv: empty hyperparameter grid"));
    }
    for params in grid {
        params.validate()?;
    }
    let folds = build_folds(train, k, seed, fixed_scaler)?;
    let mut evaluations = Vec::with_capacity(grid.len());
    for (c, params) in grid.iter().enumerate() {
        let mut fold_rmse = Vec::with_capacity(k);
        for (f, fold) in folds.iter().enumerate() {
            let model_seed = derive_seed(seed, (c * k + f) as u64);
            let model = train_model_with_scaler(&fold.train, params, &fold.scaler, model_seed)?;
            let pred: Vec<f64> = fold
                .val_features
                .iter()
                .map(|x| model.predict(x))
                .collect::<Result<_>>()?;
            fold_rmse.push(regression_errors(&pred, &fold.val_scores)?.0);
        }
        let mean_rmse = fold_rmse.iter().sum::<f64>() / k as f64;
        evaluations.push(GridEvaluation {
            params: params.clone(),
            fold_rmse,
            mean_rmse,
        });
    }
    let mut selected = 0;
    for (i, e) in evaluations.iter().enumerate() {
        if e.mean_rmse < evaluations[selected].mean_rmse {
            selected = i;
        }
    }
    Ok(GridSearchResult {
        evaluations,
        selected,
        k,
        seed,
    })
}

/// Protocol controls; the defaults mirror the reference procedure
/// (80/20 split, 5 folds, leak-free scaling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub test_fraction: f64,
    pub k: usize,
    pub scaler_mode: ScalerMode,
    pub seed: u64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            test_fraction: 0.2,
            k: 5,
            scaler_mode: ScalerMode::default(),
            seed: 0,
        }
    }
}

/// Everything the protocol produces: the final retrained model, the
/// grid search evidence, and the held-out test report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub model: TrainedModel,
    pub search: GridSearchResult,
    pub report: EvalReport,
}

/// Run the full protocol: split off a test set, grid-search by k-fold
/// cross-validation on the training set, retrain the selected
/// configuration on the whole training set, and evaluate on the test
/// set. The report's provenance block records the seed, scaler mode,
/// data provenance, and model kind.
pub fn run_training_protocol(
    dataset: &Dataset,
    grid: &[ModelParams],
    options: &ProtocolOptions,
) -> Result<ProtocolResult> {
    let split_seed = derive_seed(options.seed, 1);
    let search_seed = derive_seed(options.seed, 2);
    let final_seed = derive_seed(options.seed, 3);

    let whole_scaler = match options.scaler_mode {
        ScalerMode::FitOnAll => Some(fit_scaler(dataset)?),
        ScalerMode::FitOnTrain => None,
    };
    let (train, test) = crate::data::split_dataset(dataset, options.test_fraction, split_seed)?;
    let search = cross_validate_grid(&train, grid, options.k, search_seed, whole_scaler.as_ref())?;
    let final_scaler = match &whole_scaler {
        Some(s) => s.clone(),
        None => fit_scaler(&train)?,
    };
    let model =
        train_model_with_scaler(&train, search.selected_params(), &final_scaler, final_seed)?;
    let pred = model.predict_dataset(&test)?;
    let report = evaluate(
        &pred,
        &test.scores(),
        EvalProvenance {
            data: dataset.provenance,
            seed: options.seed,
            scaler_mode: options.scaler_mode,
            model: Some(model.kind().name().to_string()),
        },
    )?;
    Ok(ProtocolResult {
        model,
        search,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::test_support::toy_dataset;
    use crate::models::{GbtParams, MlpParams, RfParams};

    fn small_gbt(n_trees: usize) -> ModelParams {
        ModelParams::Gbt(GbtParams {
            n_trees,
            max_depth: 2,
            ..GbtParams::default()
        })
    }

    #[test]
    fn folds_partition_exactly() {
        let folds = cv_folds(23, 5, 99).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5, 5, 4, 4]);
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        for fold in &folds {
            assert!(fold.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(cv_folds(4, 5, 0).is_err());
        assert!(cv_folds(10, 1, 0).is_err());
    }

    #[test]
    fn single_configuration_is_selected() {
        let data = toy_dataset(30, 2, 0.2, 31);
        let grid = vec![small_gbt(20)];
        let result = cross_validate_grid(&data, &grid, 5, 7, None).unwrap();
        assert_eq!(result.evaluations.len(), 1);
        assert_eq!(result.selected, 0);
        assert_eq!(result.evaluations[0].fold_rmse.len(), 5);
        assert!(mean_matches_folds(&result));
    }

    fn mean_matches_folds(result: &GridSearchResult) -> bool {
        result.evaluations.iter().all(|e| {
            let mean = e.fold_rmse.iter().sum::<f64>() / e.fold_rmse.len() as f64;
            (mean - e.mean_rmse).abs() < 1e-15
        })
    }

    #[test]
    fn empty_grid_rejected() {
        let data = toy_dataset(30, 2, 0.2, 32);
        assert!(cross_validate_grid(&data, &[], 5, 7, None).is_err());
    }

    /// With folds of size one, each fold RMSE is one |residual|, so the
    /// configuration's mean RMSE is the mean absolute residual.
    #[test]
    fn leave_one_out_mean_rmse_is_mean_absolute_residual() {
        let data = toy_dataset(10, 2, 0.3, 33);
        let seed = 55;
        let grid = vec![small_gbt(10)];
        let result = cross_validate_grid(&data, &grid, 10, seed, None).unwrap();
        let eval = &result.evaluations[0];
        assert_eq!(eval.fold_rmse.len(), 10);

        let folds = cv_folds(10, 10, seed).unwrap();
        let mut residuals = Vec::new();
        for (f, fold) in folds.iter().enumerate() {
            assert_eq!(fold.len(), 1);
            let held = fold[0];
            let train_samples: Vec<_> = data
                .samples
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != held)
                .map(|(_, s)| s.clone())
                .collect();
            let fold_train = Dataset {
                schema: data.schema.clone(),
                samples: train_samples,
                provenance: data.provenance,
            };
            let scaler = fit_scaler(&fold_train).unwrap();
            let model = train_model_with_scaler(
                &fold_train,
                &grid[0],
                &scaler,
                derive_seed(seed, f as u64),
            )
            .unwrap();
            let pred = model.predict(&data.samples[held].features).unwrap();
            let residual = (pred - data.samples[held].score).abs();
            assert!((eval.fold_rmse[f] - residual).abs() < 1e-12);
            residuals.push(residual);
        }
        let mean_abs = residuals.iter().sum::<f64>() / residuals.len() as f64;
        assert!((eval.mean_rmse - mean_abs).abs() < 1e-12);
    }

    /// Duplicate configurations produce equal mean RMSEs (boosting has
    /// no seed dependence), so selection must take the earliest.
    #[test]
    fn ties_select_earliest_grid_entry() {
        let data = toy_dataset(25, 2, 0.2, 34);
        let grid = vec![small_gbt(15), small_gbt(15)];
        let result = cross_validate_grid(&data, &grid, 5, 3, None).unwrap();
        assert_eq!(
            result.evaluations[0].mean_rmse,
            result.evaluations[1].mean_rmse
        );
        assert_eq!(result.selected, 0);
    }

    #[test]
    fn search_is_deterministic() {
        let data = toy_dataset(40, 3, 0.3, 35);
        let grid = vec![
            ModelParams::Rf(RfParams {
                n_trees: 10,
                max_depth: 4,
                ..RfParams::default()
            }),
            ModelParams::Rf(RfParams {
                n_trees: 20,
                max_depth: 4,
                ..RfParams::default()
            }),
        ];
        let a = cross_validate_grid(&data, &grid, 4, 11, None).unwrap();
        let b = cross_validate_grid(&data, &grid, 4, 11, None).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = cross_validate_grid(&data, &grid, 4, 12, None).unwrap();
        assert_ne!(a.evaluations[0].fold_rmse, c.evaluations[0].fold_rmse);
    }

    #[test]
    fn protocol_splits_eighty_twenty_and_reports() {
        let data = toy_dataset(500, 3, 0.3, 36);
        let grid = vec![small_gbt(60), small_gbt(120)];
        let options = ProtocolOptions {
            seed: 77,
            ..ProtocolOptions::default()
        };
        let result = run_training_protocol(&data, &grid, &options).unwrap();
        assert_eq!(result.report.n, 100);
        assert_eq!(result.search.k, 5);
        for eval in &result.search.evaluations {
            assert_eq!(eval.fold_rmse.len(), 5);
        }
        assert_eq!(result.report.provenance.seed, 77);
        assert_eq!(result.report.provenance.model.as_deref(), Some("gbt"));
        assert_eq!(
            result.report.provenance.scaler_mode,
            ScalerMode::FitOnTrain
        );
        // Monotone signal with mild noise: the ranking must be strong.
        assert!(result.report.spearman_rho.unwrap() >= 0.8);
    }

    #[test]
    fn protocol_is_deterministic_end_to_end() {
        let data = toy_dataset(60, 2, 0.3, 37);
        let grid = vec![ModelParams::Mlp(MlpParams {
            hidden_widths: vec![4],
            epochs: 60,
            ..MlpParams::default()
        })];
        let options = ProtocolOptions {
            seed: 5,
            ..ProtocolOptions::default()
        };
        let a = run_training_protocol(&data, &grid, &options).unwrap();
        let b = run_training_protocol(&data, &grid, &options).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        let c = run_training_protocol(
            &data,
            &grid,
            &ProtocolOptions {
                seed: 6,
                ..options
            },
        )
        .unwrap();
        assert_ne!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&c).unwrap()
        );
    }

    #[test]
    fn scaler_modes_change_standardization_source() {
        let data = toy_dataset(50, 2, 0.3, 38);
        let grid = vec![small_gbt(10)];
        let on_train = run_training_protocol(
            &data,
            &grid,
            &ProtocolOptions {
                seed: 9,
                ..ProtocolOptions::default()
            },
        )
        .unwrap();
        let on_all = run_training_protocol(
            &data,
            &grid,
            &ProtocolOptions {
                seed: 9,
                scaler_mode: ScalerMode::FitOnAll,
                ..ProtocolOptions::default()
            },
        )
        .unwrap();
        let whole = fit_scaler(&data).unwrap();
        assert_eq!(on_all.model.scaler, whole);
        assert_ne!(on_train.model.scaler, whole);
        assert_eq!(
            on_all.report.provenance.scaler_mode,
            ScalerMode::FitOnAll
        );
    }

    /// Applying a strictly increasing transformation to predictions
    /// leaves the rank correlation untouched.
    #[test]
    fn monotone_prediction_transform_preserves_spearman() {
        let data = toy_dataset(40, 2, 0.4, 39);
        let (train, test) = crate::data::split_dataset(&data, 0.25, 4).unwrap();
        let scaler = fit_scaler(&train).unwrap();
        let model = train_model_with_scaler(&train, &small_gbt(20), &scaler, 2).unwrap();
        let pred = model.predict_dataset(&test).unwrap();
        let warped: Vec<f64> = pred.iter().map(|p| 0.5 * p.exp() + 3.0).collect();
        let provenance = EvalProvenance {
            data: data.provenance,
            seed: 0,
            scaler_mode: ScalerMode::FitOnTrain,
            model: None,
        };
        let base = evaluate(&pred, &test.scores(), provenance.clone()).unwrap();
        let transformed = evaluate(&warped, &test.scores(), provenance).unwrap();
        assert_eq!(base.spearman_rho, transformed.spearman_rho);
    }
}
