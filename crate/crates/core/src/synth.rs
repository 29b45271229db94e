//! Synthetic corpus generation.
//!
//! The datasets this toolkit was built for are private, so tests, demos,
//! and acceptance runs use a documented generator instead. Each sample
//! draws a latent proficiency `u ~ N(0, 1)`; every feature is
//!
//! ```text
//! value = mean + sd * (loading * u + sqrt(1 - loading^2) * noise)
//! ```
//!
//! with per-feature means, standard deviations, and signed loadings
//! fixed in [`magnitude_table`] to match the published descriptive
//! statistics of the real corpus (e.g. FluDel NUP mean 34.05, SD
//! 14.95). Count features are rounded and floored at zero, ratio
//! features clipped to [0, 1], other non-negative quantities floored
//! at zero.
//!
//! The score column is a documented monotone function of the same
//! latent: `score = 5.5 + 1.3 u + N(0, 0.3)`, clipped to [3, 8] (the
//! observed corpus has no 1-2 band scores). Higher `u` therefore means
//! higher scores, faster cleaner delivery, fewer pauses and errors,
//! and richer collocations, so regression targets are learnable and
//! feature attributions have known signs. The alternative
//! [`ScoreProfile::Gaussian`] replaces the marginal score distribution
//! with a clipped normal while keeping the feature-score coupling; it
//! exists to reproduce the skewed raw sets that augmentation is meant
//! to balance.

use rand_distr::{Distribution, Normal};

use crate::data::{DataProvenance, Dataset, Dimension, FeatureSchema, Sample, SCORE_MAX};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Lower score clip: generated corpora mirror the observed 3-8 range.
pub const SYNTH_SCORE_MIN: f64 = 3.0;

/// Score midpoint in the monotone model.
pub const SIGNAL_MID: f64 = 5.5;

/// Latent-to-score gain in the monotone model.
pub const SIGNAL_GAIN: f64 = 1.3;

/// Standard deviation of the score noise in the monotone model.
pub const SIGNAL_NOISE_SD: f64 = 0.3;

/// How the score column is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreProfile {
    /// The documented monotone ground truth:
    /// `score = 5.5 + 1.3 u + N(0, 0.3)`, clipped to [3, 8].
    Signal,
    /// `score ~ N(mean, sd)` clipped to [3, 8]; the latent proficiency
    /// is inferred back from the score so features stay coupled to it.
    Gaussian { mean: f64, sd: f64 },
}

#[derive(Clone, Copy)]
enum ValueKind {
    /// Rounded to the nearest integer, floored at zero.
    Count,
    /// Clipped to [0, 1].
    Unit,
    /// Floored at zero.
    NonNegative,
}

struct FeatureGen {
    name: &'static str,
    mean: f64,
    sd: f64,
    /// Correlation of the feature with the latent proficiency; the
    /// sign encodes whether more of it indicates better interpreting.
    loading: f64,
    kind: ValueKind,
}

const fn gen_spec(
    name: &'static str,
    mean: f64,
    sd: f64,
    loading: f64,
    kind: ValueKind,
) -> FeatureGen {
    FeatureGen {
        name,
        mean,
        sd,
        loading,
        kind,
    }
}

/// Published raw-corpus magnitudes (mean, SD) with chosen loadings, in
/// schema feature order.
fn magnitude_table(dimension: Dimension) -> Vec<FeatureGen> {
    use ValueKind::*;
    match dimension {
        Dimension::InfoCom => vec![
            gen_spec("chrF", 0.11, 0.02, 0.6, Unit),
            gen_spec("BLEURT20", 0.51, 0.13, 0.8, Unit),
            gen_spec("BERTScore", 0.96, 0.01, 0.5, Unit),
            gen_spec("CometKiwi", 0.51, 0.10, 0.7, Unit),
            gen_spec("xCOMET", 0.18, 0.11, 0.7, Unit),
        ],
        Dimension::FluDel => vec![
            gen_spec("SR", 1.73, 0.48, 0.7, NonNegative),
            gen_spec("AR", 3.87, 0.53, 0.5, NonNegative),
            gen_spec("PTR", 0.63, 0.12, 0.8, Unit),
            gen_spec("MLS", 0.26, 0.04, -0.4, NonNegative),
            gen_spec("MLR", 16.99, 2.60, 0.7, NonNegative),
            gen_spec("PSC", 197.78, 55.36, 0.3, Count),
            gen_spec("NFP", 15.72, 8.41, -0.6, Count),
            gen_spec("NUP", 34.05, 14.95, -0.8, Count),
            gen_spec("MLFP", 0.35, 0.14, -0.3, NonNegative),
            gen_spec("MLUP", 1.00, 0.61, -0.6, NonNegative),
            gen_spec("NRLFP", 0.18, 0.54, -0.3, Count),
            gen_spec("NRLUP", 1.05, 1.33, -0.5, Count),
            gen_spec("NRSA", 3.75, 2.99, -0.4, Count),
            gen_spec("NPSA", 0.78, 1.28, -0.4, Count),
        ],
        Dimension::TlQual => vec![
            gen_spec("NRW", 1.68, 0.51, -0.5, Count),
            gen_spec("NMW", 2.17, 0.62, -0.6, Count),
            gen_spec("NWSE", 4.13, 1.15, -0.7, Count),
            gen_spec("NWOE", 0.98, 0.34, -0.4, Count),
            // The published table omits sentence length; magnitude
            // extrapolated as T-unit length times T-units per sentence.
            gen_spec("MLS", 62.6, 15.0, 0.3, NonNegative),
            gen_spec("MLTU", 19.57, 3.46, 0.4, NonNegative),
            gen_spec("NTPS", 3.20, 1.11, 0.3, NonNegative),
            gen_spec("MLC", 16.87, 2.70, 0.4, NonNegative),
            gen_spec("NCPS", 3.69, 1.28, 0.3, NonNegative),
            gen_spec("VO_RTTR", 2.55, 0.62, 0.5, NonNegative),
            gen_spec("VO_RATIO", 0.21, 0.08, 0.3, Unit),
            gen_spec("SP_RTTR", 2.54, 0.60, 0.5, NonNegative),
            gen_spec("SP_RATIO", 0.22, 0.09, 0.3, Unit),
            gen_spec("AN_RTTR", 1.48, 0.65, 0.5, NonNegative),
            gen_spec("AN_RATIO", 0.08, 0.04, 0.3, Unit),
            gen_spec("AP_RTTR", 3.18, 0.77, 0.5, NonNegative),
            gen_spec("AP_RATIO", 0.37, 0.09, 0.3, Unit),
            gen_spec("CN_RTTR", 0.40, 0.58, 0.2, NonNegative),
            gen_spec("CN_RATIO", 0.01, 0.02, 0.2, Unit),
            gen_spec("PP_RTTR", 0.67, 0.56, 0.2, NonNegative),
            gen_spec("PP_RATIO", 0.03, 0.03, 0.2, Unit),
            gen_spec("PV_RTTR", 0.89, 0.57, 0.2, NonNegative),
            gen_spec("PV_RATIO", 0.04, 0.04, 0.2, Unit),
            gen_spec("PC_RTTR", 0.88, 0.64, 0.2, NonNegative),
            gen_spec("PC_RATIO", 0.04, 0.04, 0.2, Unit),
        ],
    }
}

/// Generate a corpus with the monotone [`ScoreProfile::Signal`] scores.
pub fn generate_synthetic_corpus(dimension: Dimension, n: usize, seed: u64) -> Result<Dataset> {
    generate_with_profile(dimension, n, seed, ScoreProfile::Signal)
}

/// Generate a corpus with an explicit score profile. Needs n >= 10.
pub fn generate_with_profile(
    dimension: Dimension,
    n: usize,
    seed: u64,
    profile: ScoreProfile,
) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::invalid(format!(
            "synth: need at least 10 samples, got {n}"
        )));
    }
    if let ScoreProfile::Gaussian { mean, sd } = profile {
        if !mean.is_finite() || !sd.is_finite() || sd <= 0.0 {
            return Err(Error::invalid(format!(
                "synth: gaussian score profile needs finite mean and positive sd, \
                 got mean {mean}, sd {sd}"
            )));
        }
    }
    let schema = FeatureSchema::for_dimension(dimension);
    let table = magnitude_table(dimension);
    debug_assert!(schema
        .features
        .iter()
        .zip(&table)
        .all(|(spec, g)| spec.name == g.name));

    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = rng_from_seed(seed);
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let (u, score) = match profile {
            ScoreProfile::Signal => {
                let u: f64 = std_normal.sample(&mut rng);
                let noise: f64 = std_normal.sample(&mut rng);
                let score = (SIGNAL_MID + SIGNAL_GAIN * u + SIGNAL_NOISE_SD * noise)
                    .clamp(SYNTH_SCORE_MIN, SCORE_MAX);
                (u, score)
            }
            ScoreProfile::Gaussian { mean, sd } => {
                let draw: f64 = std_normal.sample(&mut rng);
                let score = (mean + sd * draw).clamp(SYNTH_SCORE_MIN, SCORE_MAX);
                ((score - SIGNAL_MID) / SIGNAL_GAIN, score)
            }
        };
        let features = table
            .iter()
            .map(|g| {
                let eps: f64 = std_normal.sample(&mut rng);
                let residual = (1.0 - g.loading * g.loading).sqrt();
                let v = g.mean + g.sd * (g.loading * u + residual * eps);
                match g.kind {
                    ValueKind::Count => v.round().max(0.0),
                    ValueKind::Unit => v.clamp(0.0, 1.0),
                    ValueKind::NonNegative => v.max(0.0),
                }
            })
            .collect();
        // `rec-` ids mimic recording ids and stay clear of the `syn-`
        // prefix the augmenter reserves for generated rows.
        samples.push(Sample::new(format!("rec-{i:04}"), features, score));
    }
    Dataset::new(schema, samples, DataProvenance::Raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::descriptive_stats;
    use crate::eval::spearman;

    #[test]
    fn magnitude_tables_match_schema_order() {
        for dimension in [Dimension::InfoCom, Dimension::FluDel, Dimension::TlQual] {
            let schema = FeatureSchema::for_dimension(dimension);
            let table = magnitude_table(dimension);
            assert_eq!(schema.len(), table.len());
            for (spec, g) in schema.features.iter().zip(&table) {
                assert_eq!(spec.name, g.name, "{dimension:?}");
                assert!(g.sd > 0.0);
                assert!(g.loading.abs() < 1.0);
            }
        }
    }

    #[test]
    fn fludel_magnitudes_match_published_ranges() {
        let data = generate_synthetic_corpus(Dimension::FluDel, 117, 42).unwrap();
        let nup = data.feature_column(data.schema.feature_index("NUP").unwrap());
        let m = descriptive_stats(&nup).unwrap();
        assert!((29.0..=39.0).contains(&m.mean), "NUP mean {}", m.mean);
        let sd = m.sd.unwrap();
        assert!((10.0..=20.0).contains(&sd), "NUP sd {sd}");

        let psc = data.feature_column(data.schema.feature_index("PSC").unwrap());
        let m = descriptive_stats(&psc).unwrap();
        assert!((170.0..=225.0).contains(&m.mean), "PSC mean {}", m.mean);
    }

    #[test]
    fn scores_are_bounded_and_monotone_in_the_signal() {
        let data = generate_synthetic_corpus(Dimension::FluDel, 200, 7).unwrap();
        let scores = data.scores();
        assert!(scores.iter().all(|&s| (3.0..=8.0).contains(&s)));

        // Positively loaded features track the score, negatively loaded
        // ones oppose it.
        let ptr = data.feature_column(data.schema.feature_index("PTR").unwrap());
        let rho = spearman(&ptr, &scores).unwrap().rho.unwrap();
        assert!(rho > 0.4, "PTR rho {rho}");
        let nup = data.feature_column(data.schema.feature_index("NUP").unwrap());
        let rho = spearman(&nup, &scores).unwrap().rho.unwrap();
        assert!(rho < -0.4, "NUP rho {rho}");
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_synthetic_corpus(Dimension::TlQual, 30, 5).unwrap();
        let b = generate_synthetic_corpus(Dimension::TlQual, 30, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(Dimension::TlQual, 30, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn small_corpora_are_rejected() {
        let err = generate_synthetic_corpus(Dimension::InfoCom, 9, 1).unwrap_err();
        assert_eq!(err.code(), "invalid-input");
        assert!(generate_with_profile(
            Dimension::InfoCom,
            20,
            1,
            ScoreProfile::Gaussian { mean: 5.0, sd: 0.0 }
        )
        .is_err());
    }

    #[test]
    fn gaussian_profile_concentrates_scores() {
        let data = generate_with_profile(
            Dimension::FluDel,
            400,
            11,
            ScoreProfile::Gaussian { mean: 5.0, sd: 0.8 },
        )
        .unwrap();
        let m = descriptive_stats(&data.scores()).unwrap();
        assert!((4.8..=5.2).contains(&m.mean), "mean {}", m.mean);
        let sd = m.sd.unwrap();
        assert!((0.6..=1.0).contains(&sd), "sd {sd}");
        // Feature-score coupling survives the profile change.
        let nup = data.feature_column(data.schema.feature_index("NUP").unwrap());
        let rho = spearman(&nup, &data.scores()).unwrap().rho.unwrap();
        assert!(rho < -0.3, "NUP rho {rho}");
    }

    #[test]
    fn value_kinds_shape_the_columns() {
        for dimension in [Dimension::InfoCom, Dimension::FluDel, Dimension::TlQual] {
            let data = generate_synthetic_corpus(dimension, 60, 3).unwrap();
            for (j, g) in magnitude_table(dimension).iter().enumerate() {
                let column = data.feature_column(j);
                match g.kind {
                    ValueKind::Count => {
                        assert!(column.iter().all(|v| v.fract() == 0.0 && *v >= 0.0));
                    }
                    ValueKind::Unit => {
                        assert!(column.iter().all(|v| (0.0..=1.0).contains(v)));
                    }
                    ValueKind::NonNegative => {
                        assert!(column.iter().all(|v| *v >= 0.0));
                    }
                }
            }
        }
    }
}
