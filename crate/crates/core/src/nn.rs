//! Minimal dense feed-forward network with flat parameter storage.
//!
//! Shared by the conditional VAE and the MLP regressor. Hidden layers use
//! a ramp activation (max(0, x)), the output layer is linear, and all
//! arithmetic is double precision so finite-difference gradient checks
//! are meaningful. Parameters live in one flat vector (per layer: weight
//! matrix row-major, then biases) so optimizers and serialization treat
//! the network as a single array.

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;
use rand::Rng;

fn ramp(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Fully connected network: `shape[0]` inputs through hidden widths to
/// `shape.last()` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub shape: Vec<usize>,
    pub params: Vec<f64>,
}

/// Total parameter count for a layer shape.
pub fn param_count(shape: &[usize]) -> usize {
    shape
        .windows(2)
        .map(|w| w[0] * w[1] + w[1])
        .sum()
}

impl MlpNet {
    /// All-zero parameters (useful for gradient accumulators and tests).
    pub fn zeros(shape: Vec<usize>) -> Self {
        assert!(
            shape.len() >= 2 && shape.iter().all(|&w| w > 0),
            "network shape needs at least input and output widths, all positive"
        );
        let params = vec![0.0; param_count(&shape)];
        MlpNet { shape, params }
    }

    /// Glorot-uniform weights, zero biases, drawn from the given stream.
    pub fn glorot(shape: Vec<usize>, rng: &mut SeededRng) -> Self {
        let mut net = Self::zeros(shape);
        let mut offset = 0;
        for w in net.shape.clone().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.gen_range(-bound..=bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        net
    }

    pub fn n_layers(&self) -> usize {
        self.shape.len() - 1
    }

    pub fn n_inputs(&self) -> usize {
        self.shape[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.shape.last().unwrap()
    }

    /// (weights offset, biases offset) of layer `l` in the flat vector.
    fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut offset = 0;
        for w in self.shape.windows(2).take(l) {
            offset += w[0] * w[1] + w[1];
        }
        (offset, offset + self.shape[l] * self.shape[l + 1])
    }

    /// Forward pass, keeping pre-activations for backprop.
    pub fn trace(&self, x: &[f64]) -> MlpTrace {
        assert_eq!(x.len(), self.n_inputs(), "input width mismatch");
        assert_eq!(self.params.len(), param_count(&self.shape));
        let mut activations = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let (w_off, b_off) = self.layer_offsets(l);
            let n_in = self.shape[l];
            let input = activations.last().unwrap().clone();
            let mut z = vec![0.0; self.shape[l + 1]];
            for (i, zi) in z.iter_mut().enumerate() {
                let row = &self.params[w_off + i * n_in..w_off + (i + 1) * n_in];
                let mut acc = self.params[b_off + i];
                for (wij, xj) in row.iter().zip(&input) {
                    acc += wij * xj;
                }
                *zi = acc;
            }
            let a = if l + 1 == self.n_layers() {
                z.clone()
            } else {
                z.iter().copied().map(ramp).collect()
            };
            pre.push(z);
            activations.push(a);
        }
        MlpTrace { activations, pre }
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).output().to_vec()
    }

    /// Backpropagate `grad_out` (dL/d output) through the traced pass,
    /// accumulating parameter gradients into `grad_params` and returning
    /// dL/d input.
    pub fn backward(
        &self,
        trace: &MlpTrace,
        grad_out: &[f64],
        grad_params: &mut [f64],
    ) -> Vec<f64> {
        assert_eq!(grad_out.len(), self.n_outputs());
        assert_eq!(grad_params.len(), self.params.len());
        let mut grad_a = grad_out.to_vec();
        for l in (0..self.n_layers()).rev() {
            let (w_off, b_off) = self.layer_offsets(l);
            let n_in = self.shape[l];
            // Output layer is linear; hidden layers pass through the ramp.
            let grad_z: Vec<f64> = if l + 1 == self.n_layers() {
                grad_a.clone()
            } else {
                grad_a
                    .iter()
                    .zip(&trace.pre[l])
                    .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                    .collect()
            };
            let input = &trace.activations[l];
            let mut grad_in = vec![0.0; n_in];
            for (i, &gz) in grad_z.iter().enumerate() {
                grad_params[b_off + i] += gz;
                let row_off = w_off + i * n_in;
                for j in 0..n_in {
                    grad_params[row_off + j] += gz * input[j];
                    grad_in[j] += self.params[row_off + j] * gz;
                }
            }
            grad_a = grad_in;
        }
        grad_a
    }
}

/// Stored forward pass: `activations[0]` is the input, `activations[l+1]`
/// the post-activation output of layer `l`, `pre[l]` its pre-activation.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub activations: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

/// Adam update rule with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Adam {
    pub fn new(n_params: usize) -> Self {
        Adam {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], learning_rate: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
