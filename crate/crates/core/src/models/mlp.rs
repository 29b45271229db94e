//! MLP regressor: ramp-activated hidden layers, linear scalar output,
//! squared-error loss minimized with the Adam update rule.

use serde::{Deserialize, Serialize};

use crate::data::fisher_yates;
use crate::error::{Error, Result};
use crate::nn::{Adam, MlpNet};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// None trains on the full batch every epoch.
    pub batch_size: Option<usize>,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_widths: vec![32],
            learning_rate: 1e-3,
            epochs: 2000,
            batch_size: None,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() || self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("mlp: hidden widths must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("mlp: learning rate must be positive"));
        }
        // epochs may be 0: the model is then its initialization.
        if self.batch_size == Some(0) {
            return Err(Error::invalid("mlp: batch size must be positive"));
        }
        Ok(())
    }
}

/// Mean squared error of the net over rows (training diagnostic).
#[cfg(test)]
pub(crate) fn mean_squared_loss(net: &MlpNet, rows: &[Vec<f64>], targets: &[f64]) -> f64 {
    rows.iter()
        .zip(targets)
        .map(|(x, y)| {
            let out = net.forward(x)[0];
            (out - y) * (out - y)
        })
        .sum::<f64>()
        / rows.len() as f64
}

/// Fit on standardized rows. Returns the net and the per-epoch loss
/// trace (mean squared training error).
pub(crate) fn fit_mlp(
    rows: &[Vec<f64>],
    targets: &[f64],
    params: &MlpParams,
    seed: u64,
) -> Result<(MlpNet, Vec<f64>)> {
    params.validate()?;
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "mlp: need at least 2 training samples, got {}",
            rows.len()
        )));
    }
    let n = rows.len();
    let p = rows[0].len();
    let mut shape = vec![p];
    shape.extend_from_slice(&params.hidden_widths);
    shape.push(1);

    let mut rng = rng_from_seed(seed);
    let mut net = MlpNet::glorot(shape, &mut rng);
    let mut adam = Adam::new(net.params.len());
    let batch_size = params.batch_size.unwrap_or(n).min(n);
    let mut grads = vec![0.0; net.params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        if batch_size < n {
            fisher_yates(&mut order, &mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let trace_i = net.trace(&rows[i]);
                let residual = trace_i.output()[0] - targets[i];
                batch_loss += residual * residual;
                net.backward(&trace_i, &[2.0 * residual * scale], &mut grads);
            }
            adam.step(&mut net.params, &grads, params.learning_rate);
            epoch_loss += batch_loss;
        }
        epoch_loss /= n as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(epoch_loss);
    }
    Ok((net, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn learns_affine_function() {
        let mut rng = rng_from_seed(41);
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let targets: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let params = MlpParams {
            hidden_widths: vec![8],
            learning_rate: 1e-2,
            epochs: 2000,
            batch_size: None,
        };
        let (net, trace) = fit_mlp(&rows, &targets, &params, 43).unwrap();
        assert_eq!(trace.len(), 2000);
        let rmse = mean_squared_loss(&net, &rows, &targets).sqrt();
        assert!(rmse < 0.1, "training rmse {rmse}");
        assert!(trace.last().unwrap() < trace.first().unwrap());
    }

    #[test]
    fn zero_epochs_equals_initialization() {
        let rows = vec![vec![0.0, 1.0], vec![1.0, 0.5], vec![2.0, -1.0]];
        let targets = vec![1.0, 2.0, 3.0];
        let params = MlpParams {
            epochs: 0,
            ..MlpParams::default()
        };
        let (net, trace) = fit_mlp(&rows, &targets, &params, 5).unwrap();
        assert!(trace.is_empty());
        let mut rng = rng_from_seed(5);
        let init = MlpNet::glorot(vec![2, 32, 1], &mut rng);
        assert_eq!(net, init);
        assert!(net.forward(&[0.3, 0.4])[0].is_finite());
    }

    #[test]
    fn seeded_determinism() {
        let rows = vec![vec![0.0], vec![0.5], vec![1.0], vec![1.5]];
        let targets = vec![0.0, 1.0, 2.0, 3.0];
        let params = MlpParams {
            epochs: 50,
            ..MlpParams::default()
        };
        let (a, _) = fit_mlp(&rows, &targets, &params, 7).unwrap();
        let (b, _) = fit_mlp(&rows, &targets, &params, 7).unwrap();
        assert_eq!(a, b);
        let (c, _) = fit_mlp(&rows, &targets, &params, 8).unwrap();
        assert_ne!(a, c);
    }

    /// Finite-difference check of the full training gradient (loss
    /// averaged over a batch) at initialization.
    #[test]
    fn training_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(47);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let net = MlpNet::glorot(vec![3, 8, 1], &mut rng_from_seed(48));

        let mut grads = vec![0.0; net.params.len()];
        let scale = 1.0 / rows.len() as f64;
        for (x, y) in rows.iter().zip(&targets) {
            let t = net.trace(x);
            let residual = t.output()[0] - y;
            net.backward(&t, &[2.0 * residual * scale], &mut grads);
        }

        let h = 1e-5;
        let mut probe = net.clone();
        let mut max_rel = 0.0f64;
        for i in 0..probe.params.len() {
            let original = probe.params[i];
            probe.params[i] = original + h;
            let plus = mean_squared_loss(&probe, &rows, &targets);
            probe.params[i] = original - h;
            let minus = mean_squared_loss(&probe, &rows, &targets);
            probe.params[i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (grads[i] - numeric).abs() / (grads[i].abs() + numeric.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn rejects_bad_params() {
        let rows = vec![vec![0.0], vec![1.0]];
        let targets = vec![0.0, 1.0];
        for bad in [
            MlpParams {
                hidden_widths: vec![],
                ..MlpParams::default()
            },
            MlpParams {
                hidden_widths: vec![0],
                ..MlpParams::default()
            },
            MlpParams {
                learning_rate: 0.0,
                ..MlpParams::default()
            },
            MlpParams {
                batch_size: Some(0),
                ..MlpParams::default()
            },
        ] {
            assert!(fit_mlp(&rows, &targets, &bad, 1).is_err());
        }
    }
}
