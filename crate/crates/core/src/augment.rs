//! Conditional VAE data augmentation.
//!
//! One model is trained per dimension on the raw samples. Features and
//! scores are z-scored internally; the standardized score is appended to
//! both the encoder and the decoder input as the conditioning signal, so
//! generation can target any score in the observed range and the label
//! attached to a synthetic sample is its conditioning score exactly.
//!
//! The loss is the negative ELBO with a squared-error reconstruction
//! term: reconstruction = squared error summed over features, averaged
//! over the batch; kl = mean over the batch of 1/2 * sum(mu^2 + sigma^2
//! - log sigma^2 - 1); total = reconstruction + kl_weight * kl.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{
    fisher_yates, fit_scaler, fit_scaler_columns, DataProvenance, Dataset, Dimension, Sample,
    Scaler, SCORE_MAX, SCORE_MIN,
};
use crate::error::{Error, Result};
use crate::nn::{Adam, MlpNet};
use crate::rng::{derive_seed, rng_from_seed};

/// Training configuration. Defaults: 8 latent dimensions, one hidden
/// layer of 32 in each net, learning rate 1e-3, 2,000 full-batch epochs,
/// KL weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeConfig {
    pub latent_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// None trains on the full batch every epoch.
    pub batch_size: Option<usize>,
    pub kl_weight: f64,
    pub seed: u64,
}

impl Default for CvaeConfig {
    fn default() -> Self {
        CvaeConfig {
            latent_dim: 8,
            hidden_widths: vec![32],
            learning_rate: 1e-3,
            epochs: 2000,
            batch_size: None,
            kl_weight: 1.0,
            seed: 0,
        }
    }
}

impl CvaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::invalid("cvae: latent_dim must be positive"));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("cvae: hidden widths must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("cvae: learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("cvae: epochs must be positive"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("cvae: batch size must be positive"));
        }
        if !(self.kl_weight >= 0.0) {
            return Err(Error::invalid("cvae: kl_weight must be non-negative"));
        }
        Ok(())
    }
}

/// Loss components of one epoch (or one evaluation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// A trained conditional VAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvaeModel {
    pub dimension: Dimension,
    pub config: CvaeConfig,
    /// Maps standardized [features, condition] to [mu, log variance].
    pub encoder: MlpNet,
    /// Maps [latent, condition] back to standardized features.
    pub decoder: MlpNet,
    pub feature_scaler: Scaler,
    pub condition_scaler: Scaler,
    /// Per-epoch loss components, length = config.epochs after training.
    pub trace: Vec<ElboTerms>,
}

impl CvaeModel {
    pub fn new(
        dimension: Dimension,
        config: CvaeConfig,
        encoder: MlpNet,
        decoder: MlpNet,
        feature_scaler: Scaler,
        condition_scaler: Scaler,
    ) -> Result<Self> {
        config.validate()?;
        let p = feature_scaler.len();
        let latent = config.latent_dim;
        if encoder.n_inputs() != p + 1 || encoder.n_outputs() != 2 * latent {
            return Err(Error::invalid(format!(
                "cvae: encoder shape {:?} inconsistent with {p} features, latent {latent}",
                encoder.shape
            )));
        }
        if decoder.n_inputs() != latent + 1 || decoder.n_outputs() != p {
            return Err(Error::invalid(format!(
                "cvae: decoder shape {:?} inconsistent with {p} features, latent {latent}",
                decoder.shape
            )));
        }
        if condition_scaler.len() != 1 {
            return Err(Error::invalid("cvae: condition scaler must be 1-wide"));
        }
        Ok(CvaeModel {
            dimension,
            config,
            encoder,
            decoder,
            feature_scaler,
            condition_scaler,
            trace: Vec::new(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_scaler.len()
    }
}

/// Standardize a dataset into (features, condition) pairs using the
/// model's scalers.
pub fn standardized_batch(model: &CvaeModel, dataset: &Dataset) -> Result<Vec<(Vec<f64>, f64)>> {
    if dataset.schema.len() != model.n_features() {
        return Err(Error::invalid(format!(
            "cvae: dataset has {} features, model expects {}",
            dataset.schema.len(),
            model.n_features()
        )));
    }
    Ok(dataset
        .samples
        .iter()
        .map(|s| {
            (
                model.feature_scaler.transform_row(&s.features),
                model.condition_scaler.transform_value(0, s.score),
            )
        })
        .collect())
}

/// Forward evaluation of the loss terms with explicit latent noise.
/// `eps[i]` holds the reparameterization draw for batch row `i`.
fn loss_on_batch(
    encoder: &MlpNet,
    decoder: &MlpNet,
    batch: &[(Vec<f64>, f64)],
    eps: &[Vec<f64>],
    kl_weight: f64,
) -> ElboTerms {
    let latent = decoder.n_inputs() - 1;
    let b = batch.len() as f64;
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    for ((x, c), e) in batch.iter().zip(eps) {
        let mut enc_in = x.clone();
        enc_in.push(*c);
        let enc_out = encoder.forward(&enc_in);
        let (mu, logvar) = enc_out.split_at(latent);
        let mut dec_in: Vec<f64> = (0..latent)
            .map(|k| mu[k] + (0.5 * logvar[k]).exp() * e[k])
            .collect();
        dec_in.push(*c);
        let xhat = decoder.forward(&dec_in);
        recon_sum += xhat
            .iter()
            .zip(x)
            .map(|(xh, xv)| (xh - xv) * (xh - xv))
            .sum::<f64>();
        kl_sum += 0.5
            * (0..latent)
                .map(|k| mu[k] * mu[k] + logvar[k].exp() - logvar[k] - 1.0)
                .sum::<f64>();
    }
    let reconstruction = recon_sum / b;
    let kl = kl_sum / b;
    ElboTerms {
        total: reconstruction + kl_weight * kl,
        reconstruction,
        kl,
    }
}

/// Forward + backward over a batch. Gradients of the total loss are
/// accumulated (averaged over the batch) into the two gradient buffers.
fn grads_on_batch(
    encoder: &MlpNet,
    decoder: &MlpNet,
    batch: &[(Vec<f64>, f64)],
    eps: &[Vec<f64>],
    kl_weight: f64,
    enc_grads: &mut [f64],
    dec_grads: &mut [f64],
) -> ElboTerms {
    let latent = decoder.n_inputs() - 1;
    let b = batch.len() as f64;
    let scale = 1.0 / b;
    let mut recon_sum = 0.0;
    let mut kl_sum = 0.0;
    for ((x, c), e) in batch.iter().zip(eps) {
        let mut enc_in = x.clone();
        enc_in.push(*c);
        let enc_trace = encoder.trace(&enc_in);
        let enc_out = enc_trace.output().to_vec();
        let (mu, logvar) = enc_out.split_at(latent);
        let sigma: Vec<f64> = logvar.iter().map(|&lv| (0.5 * lv).exp()).collect();
        let mut dec_in: Vec<f64> = (0..latent).map(|k| mu[k] + sigma[k] * e[k]).collect();
        dec_in.push(*c);
        let dec_trace = decoder.trace(&dec_in);
        let xhat = dec_trace.output();
        let residuals: Vec<f64> = xhat.iter().zip(x).map(|(xh, xv)| xh - xv).collect();
        recon_sum += residuals.iter().map(|r| r * r).sum::<f64>();
        kl_sum += 0.5
            * (0..latent)
                .map(|k| mu[k] * mu[k] + logvar[k].exp() - logvar[k] - 1.0)
                .sum::<f64>();

        let grad_xhat: Vec<f64> = residuals.iter().map(|r| 2.0 * r * scale).collect();
        let dec_grad_in = decoder.backward(&dec_trace, &grad_xhat, dec_grads);
        // Chain through z = mu + sigma * eps and add the KL partials.
        let mut enc_grad_out = vec![0.0; 2 * latent];
        for k in 0..latent {
            let gz = dec_grad_in[k];
            enc_grad_out[k] = gz + kl_weight * scale * mu[k];
            enc_grad_out[latent + k] = gz * 0.5 * sigma[k] * e[k]
                + kl_weight * scale * 0.5 * (logvar[k].exp() - 1.0);
        }
        encoder.backward(&enc_trace, &enc_grad_out, enc_grads);
    }
    let reconstruction = recon_sum / b;
    let kl = kl_sum / b;
    ElboTerms {
        total: reconstruction + kl_weight * kl,
        reconstruction,
        kl,
    }
}

/// Loss terms of a standardized batch, evaluated at the posterior mean
/// (latent noise zero), so the result is a deterministic function of the
/// model and the batch.
pub fn elbo(model: &CvaeModel, batch: &[(Vec<f64>, f64)]) -> Result<ElboTerms> {
    if batch.is_empty() {
        return Err(Error::invalid("elbo: empty batch"));
    }
    let p = model.n_features();
    if batch.iter().any(|(x, _)| x.len() != p) {
        return Err(Error::invalid(format!(
            "elbo: batch rows must have {p} features"
        )));
    }
    let eps = vec![vec![0.0; model.config.latent_dim]; batch.len()];
    Ok(loss_on_batch(
        &model.encoder,
        &model.decoder,
        batch,
        &eps,
        model.config.kl_weight,
    ))
}

/// Train a conditional VAE on a raw dataset (at least 10 samples).
pub fn train_cvae(raw: &Dataset, config: &CvaeConfig) -> Result<CvaeModel> {
    config.validate()?;
    if raw.len() < 10 {
        return Err(Error::invalid(format!(
            "cvae training needs at least 10 samples, got {}",
            raw.len()
        )));
    }
    let p = raw.schema.len();
    let latent = config.latent_dim;
    let feature_scaler = fit_scaler(raw)?;
    let condition_scaler = fit_scaler_columns(&[raw.scores()])?;

    let mut enc_shape = vec![p + 1];
    enc_shape.extend_from_slice(&config.hidden_widths);
    enc_shape.push(2 * latent);
    let mut dec_shape = vec![latent + 1];
    dec_shape.extend_from_slice(&config.hidden_widths);
    dec_shape.push(p);

    let mut rng = rng_from_seed(config.seed);
    let mut encoder = MlpNet::glorot(enc_shape, &mut rng);
    let mut decoder = MlpNet::glorot(dec_shape, &mut rng);
    let mut adam_enc = Adam::new(encoder.params.len());
    let mut adam_dec = Adam::new(decoder.params.len());

    let batch_all: Vec<(Vec<f64>, f64)> = raw
        .samples
        .iter()
        .map(|s| {
            (
                feature_scaler.transform_row(&s.features),
                condition_scaler.transform_value(0, s.score),
            )
        })
        .collect();
    let n = batch_all.len();
    let batch_size = config.batch_size.unwrap_or(n).min(n);

    let mut trace = Vec::with_capacity(config.epochs);
    let mut enc_grads = vec![0.0; encoder.params.len()];
    let mut dec_grads = vec![0.0; decoder.params.len()];
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..config.epochs {
        if batch_size < n {
            fisher_yates(&mut order, &mut rng);
        }
        let mut weighted_total = 0.0;
        let mut weighted_recon = 0.0;
        let mut weighted_kl = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<(Vec<f64>, f64)> =
                chunk.iter().map(|&i| batch_all[i].clone()).collect();
            let eps: Vec<Vec<f64>> = (0..batch.len())
                .map(|_| (0..latent).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            enc_grads.iter_mut().for_each(|g| *g = 0.0);
            dec_grads.iter_mut().for_each(|g| *g = 0.0);
            let terms = grads_on_batch(
                &encoder,
                &decoder,
                &batch,
                &eps,
                config.kl_weight,
                &mut enc_grads,
                &mut dec_grads,
            );
            adam_enc.step(&mut encoder.params, &enc_grads, config.learning_rate);
            adam_dec.step(&mut decoder.params, &dec_grads, config.learning_rate);
            let w = batch.len() as f64 / n as f64;
            weighted_total += terms.total * w;
            weighted_recon += terms.reconstruction * w;
            weighted_kl += terms.kl * w;
        }
        if !weighted_total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        trace.push(ElboTerms {
            total: weighted_total,
            reconstruction: weighted_recon,
            kl: weighted_kl,
        });
    }

    let mut model = CvaeModel::new(
        raw.schema.dimension,
        config.clone(),
        encoder,
        decoder,
        feature_scaler,
        condition_scaler,
    )?;
    model.trace = trace;
    Ok(model)
}

/// Compare analytic gradients of the total loss against central finite
/// differences over every parameter of both nets, with the latent noise
/// frozen, and return the largest relative error
/// |ga - gn| / max(1e-8, |ga| + |gn|).
pub fn gradient_check(
    model: &CvaeModel,
    batch: &[(Vec<f64>, f64)],
    epsilon: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient_check: empty batch"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("gradient_check: epsilon must be positive"));
    }
    let latent = model.config.latent_dim;
    let mut noise_rng = rng_from_seed(derive_seed(model.config.seed, 0xEC0));
    let eps: Vec<Vec<f64>> = (0..batch.len())
        .map(|_| (0..latent).map(|_| noise_rng.sample(StandardNormal)).collect())
        .collect();

    let mut enc_grads = vec![0.0; model.encoder.params.len()];
    let mut dec_grads = vec![0.0; model.decoder.params.len()];
    grads_on_batch(
        &model.encoder,
        &model.decoder,
        batch,
        &eps,
        model.config.kl_weight,
        &mut enc_grads,
        &mut dec_grads,
    );

    let mut encoder = model.encoder.clone();
    let mut decoder = model.decoder.clone();
    let mut max_rel = 0.0f64;
    let n_enc = encoder.params.len();
    let n_dec = decoder.params.len();
    for i in 0..n_enc + n_dec {
        let analytic = if i < n_enc {
            enc_grads[i]
        } else {
            dec_grads[i - n_enc]
        };
        fn slot<'a>(
            encoder: &'a mut MlpNet,
            decoder: &'a mut MlpNet,
            i: usize,
            n_enc: usize,
        ) -> &'a mut f64 {
            if i < n_enc {
                &mut encoder.params[i]
            } else {
                &mut decoder.params[i - n_enc]
            }
        }
        let original = *slot(&mut encoder, &mut decoder, i, n_enc);
        *slot(&mut encoder, &mut decoder, i, n_enc) = original + epsilon;
        let plus = loss_on_batch(&encoder, &decoder, batch, &eps, model.config.kl_weight).total;
        *slot(&mut encoder, &mut decoder, i, n_enc) = original - epsilon;
        let minus = loss_on_batch(&encoder, &decoder, batch, &eps, model.config.kl_weight).total;
        *slot(&mut encoder, &mut decoder, i, n_enc) = original;
        let numeric = (plus - minus) / (2.0 * epsilon);
        let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Synthetic feature vectors with their conditioning scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBatch {
    pub features: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub provenance: DataProvenance,
    pub seed: u64,
}

/// Decode `n` synthetic samples conditioned on scores drawn uniformly
/// from `score_range`. Each sample uses a seed derived from (seed,
/// index), so results are independent of generation order.
pub fn generate_samples(
    model: &CvaeModel,
    n: usize,
    score_range: (f64, f64),
    seed: u64,
) -> Result<SyntheticBatch> {
    let (lo, hi) = score_range;
    if n == 0 {
        return Err(Error::invalid("generate_samples: n must be at least 1"));
    }
    if !(lo < hi) || lo < SCORE_MIN || hi > SCORE_MAX {
        return Err(Error::invalid(format!(
            "generate_samples: score range [{lo}, {hi}] must satisfy {SCORE_MIN} <= lo < hi <= {SCORE_MAX}"
        )));
    }
    let latent = model.config.latent_dim;
    let mut features = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let score: f64 = rng.gen_range(lo..=hi);
        let mut dec_in: Vec<f64> = (0..latent).map(|_| rng.sample(StandardNormal)).collect();
        dec_in.push(model.condition_scaler.transform_value(0, score));
        let xhat = model.decoder.forward(&dec_in);
        features.push(model.feature_scaler.invert_row(&xhat));
        scores.push(score);
    }
    Ok(SyntheticBatch {
        features,
        scores,
        provenance: DataProvenance::Synthetic,
        seed,
    })
}

/// Append synthetic samples to the raw dataset until it reaches
/// `target_total` rows. Conditioning scores are drawn uniformly over the
/// observed raw score range; synthetic ids get a `syn-` prefix.
pub fn augment_dataset(
    raw: &Dataset,
    model: &CvaeModel,
    target_total: usize,
    seed: u64,
) -> Result<Dataset> {
    if raw.schema.dimension != model.dimension {
        return Err(Error::invalid(format!(
            "augment: dataset dimension {} does not match model dimension {}",
            raw.schema.dimension, model.dimension
        )));
    }
    if raw.schema.len() != model.n_features() {
        return Err(Error::invalid(format!(
            "augment: dataset has {} features, model expects {}",
            raw.schema.len(),
            model.n_features()
        )));
    }
    if target_total <= raw.len() {
        return Err(Error::invalid(format!(
            "augment: target total {target_total} must exceed the raw size {}",
            raw.len()
        )));
    }
    let scores = raw.scores();
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(Error::invalid(
            "augment: raw scores are constant, no range to condition on",
        ));
    }
    let n_syn = target_total - raw.len();
    let batch = generate_samples(model, n_syn, (lo, hi), seed)?;
    let mut samples = raw.samples.clone();
    for (i, (features, score)) in batch.features.into_iter().zip(batch.scores).enumerate() {
        samples.push(Sample::new(format!("syn-{:04}", i + 1), features, score));
    }
    Dataset::new(raw.schema.clone(), samples, DataProvenance::Augmented)
}

/// Persist a trained model as JSON.
pub fn save_cvae(path: impl AsRef<Path>, model: &CvaeModel) -> Result<()> {
    let path = path.as_ref();
    let json = serde_json::to_string_pretty(model).expect("model serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_cvae(path: impl AsRef<Path>) -> Result<CvaeModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
