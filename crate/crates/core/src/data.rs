//! Datasets, feature schemas, descriptive statistics, scaling, splitting.
//!
//! A [`Dataset`] is an ordered list of [`Sample`]s conforming to a
//! [`FeatureSchema`] for one assessment dimension. Scores are
//! MFRM-calibrated severity-adjusted values on the eight-point scale and
//! must lie in [1.0, 8.0]; they are ingested as ground truth, never
//! recomputed here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Assessment dimension a schema belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    /// Information completeness (fidelity of content transfer).
    InfoCom,
    /// Fluency of delivery (temporal features).
    FluDel,
    /// Target language quality (errors, syntax, collocations).
    #[serde(rename = "TLQual")]
    TlQual,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dimension::InfoCom => write!(f, "InfoCom"),
            Dimension::FluDel => write!(f, "FluDel"),
            Dimension::TlQual => write!(f, "TLQual"),
        }
    }
}

impl std::str::FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "InfoCom" | "infocom" => Ok(Dimension::InfoCom),
            "FluDel" | "fludel" => Ok(Dimension::FluDel),
            "TLQual" | "tlqual" => Ok(Dimension::TlQual),
            other => Err(Error::invalid(format!(
                "unknown dimension {other:?} (expected InfoCom, FluDel, or TLQual)"
            ))),
        }
    }
}

/// One feature column: name plus a human-readable description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub description: String,
}

impl FeatureSpec {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        FeatureSpec {
            name: name.into(),
            description: description.into(),
        }
    }
}

/// Ordered feature list for one dimension.
///
/// The optional `name` distinguishes non-default variants (for example the
/// TLQual schema extended with TOTAL_RTTR); it is omitted from JSON when
/// empty so default schemas serialize to the plain two-field shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub dimension: Dimension,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// SHA-256 of the canonical JSON serialization, hex-encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("schema serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }

    /// The five information-completeness features.
    pub fn infocom() -> Self {
        let features = vec![
            FeatureSpec::new("chrF", "character n-gram F-score against the reference"),
            FeatureSpec::new("BLEURT20", "ingested BLEURT-20 score"),
            FeatureSpec::new("BERTScore", "ingested BERTScore F1"),
            FeatureSpec::new("CometKiwi", "ingested reference-free COMET quality estimate"),
            FeatureSpec::new("xCOMET", "ingested xCOMET quality estimate"),
        ];
        FeatureSchema {
            dimension: Dimension::InfoCom,
            name: String::new(),
            features,
        }
    }

    /// The fourteen fluency-of-delivery temporal features.
    pub fn fludel() -> Self {
        let features = vec![
            FeatureSpec::new("SR", "speech rate: all syllables over total duration"),
            FeatureSpec::new("AR", "articulation rate: pruned syllables over articulation time"),
            FeatureSpec::new("PTR", "phonation time ratio"),
            FeatureSpec::new("MLS", "mean length of syllables: articulation time over pruned syllables"),
            FeatureSpec::new("MLR", "mean length of runs between unfilled pauses, in syllables"),
            FeatureSpec::new("PSC", "pruned syllable count"),
            FeatureSpec::new("NFP", "number of filled pauses"),
            FeatureSpec::new("NUP", "number of unfilled pauses of at least 0.35 s"),
            FeatureSpec::new("MLFP", "mean length of filled pauses, seconds"),
            FeatureSpec::new("MLUP", "mean length of unfilled pauses, seconds"),
            FeatureSpec::new("NRLFP", "filled pauses between the 1.5 and 3 IQR fences"),
            FeatureSpec::new("NRLUP", "unfilled pauses between the 1.5 and 3 IQR fences"),
            FeatureSpec::new("NRSA", "syllable articulations between the 1.5 and 3 IQR fences"),
            FeatureSpec::new("NPSA", "syllable articulations beyond the 3 IQR fence"),
        ];
        FeatureSchema {
            dimension: Dimension::FluDel,
            name: String::new(),
            features,
        }
    }

    /// The 8 collocation categories in canonical order.
    pub const COLLOCATION_CATEGORIES: [&'static str; 8] =
        ["VO", "SP", "AN", "AP", "CN", "PP", "PV", "PC"];

    /// The twenty-five target-language-quality features.
    pub fn tlqual() -> Self {
        Self::tlqual_inner(false)
    }

    /// TLQual extended with the aggregate TOTAL_RTTR column (26 features).
    pub fn tlqual_with_total_rttr() -> Self {
        Self::tlqual_inner(true)
    }

    fn tlqual_inner(total_rttr: bool) -> Self {
        let mut features = vec![
            FeatureSpec::new("NRW", "count of redundant-word errors"),
            FeatureSpec::new("NMW", "count of missing-word errors"),
            FeatureSpec::new("NWSE", "count of word-selection errors"),
            FeatureSpec::new("NWOE", "count of word-order errors"),
            FeatureSpec::new("MLS", "mean length of sentences, words"),
            FeatureSpec::new("MLTU", "mean length of T-units, words"),
            FeatureSpec::new("NTPS", "T-units per sentence"),
            FeatureSpec::new("MLC", "mean length of clauses, words"),
            FeatureSpec::new("NCPS", "clauses per sentence"),
        ];
        for cat in Self::COLLOCATION_CATEGORIES {
            features.push(FeatureSpec::new(
                format!("{cat}_RTTR"),
                format!("root type-token ratio of {cat} collocations"),
            ));
            features.push(FeatureSpec::new(
                format!("{cat}_RATIO"),
                format!("{cat} collocation tokens over total word tokens"),
            ));
        }
        if total_rttr {
            features.push(FeatureSpec::new(
                "TOTAL_RTTR",
                "root type-token ratio over all collocation categories",
            ));
        }
        FeatureSchema {
            dimension: Dimension::TlQual,
            name: if total_rttr {
                "TLQual+TOTAL_RTTR".to_string()
            } else {
                String::new()
            },
            features,
        }
    }

    /// The default schema for a dimension.
    pub fn for_dimension(dimension: Dimension) -> Self {
        match dimension {
            Dimension::InfoCom => Self::infocom(),
            Dimension::FluDel => Self::fludel(),
            Dimension::TlQual => Self::tlqual(),
        }
    }
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Where a dataset's rows came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataProvenance {
    /// Scored human data.
    Raw,
    /// Generated rows only.
    Synthetic,
    /// Raw plus generated rows.
    Augmented,
}

impl fmt::Display for DataProvenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataProvenance::Raw => write!(f, "raw"),
            DataProvenance::Synthetic => write!(f, "synthetic"),
            DataProvenance::Augmented => write!(f, "augmented"),
        }
    }
}

/// One scored sample: id, feature vector in schema order, score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub features: Vec<f64>,
    pub score: f64,
}

impl Sample {
    pub fn new(sample_id: impl Into<String>, features: Vec<f64>, score: f64) -> Self {
        Sample {
            sample_id: sample_id.into(),
            features,
            score,
        }
    }
}

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 8.0;

/// Samples conforming to one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    pub provenance: DataProvenance,
}

impl Dataset {
    /// Validates id uniqueness, feature arity, finiteness, and score range.
    pub fn new(
        schema: FeatureSchema,
        samples: Vec<Sample>,
        provenance: DataProvenance,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for (row, s) in samples.iter().enumerate() {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::DuplicateSampleId {
                    id: s.sample_id.clone(),
                });
            }
            if s.features.len() != schema.len() {
                return Err(Error::invalid(format!(
                    "sample {:?} has {} features, schema {} expects {}",
                    s.sample_id,
                    s.features.len(),
                    schema.dimension,
                    schema.len()
                )));
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "sample {:?}: feature {:?} is not finite",
                    s.sample_id, schema.features[j].name
                )));
            }
            if !s.score.is_finite() || s.score < SCORE_MIN || s.score > SCORE_MAX {
                return Err(Error::ScoreOutOfRange {
                    row: row + 1,
                    score: s.score,
                });
            }
        }
        Ok(Dataset {
            schema,
            samples,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.score).collect()
    }

    /// Column `j` across all samples.
    pub fn feature_column(&self, j: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.features[j]).collect()
    }

    /// Borrowed feature rows, for numeric code.
    pub fn feature_rows(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.features.as_slice()).collect()
    }
}

/// Load a dataset CSV: header `sample_id,<features...>,score`, one row per
/// sample. The header must match the schema's feature names exactly and in
/// order.
pub fn load_dataset(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    provenance: DataProvenance,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;

    let expected: Vec<String> = std::iter::once("sample_id".to_string())
        .chain(schema.features.iter().map(|f| f.name.clone()))
        .chain(std::iter::once("score".to_string()))
        .collect();
    let header = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let found: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    if found != expected {
        return Err(Error::SchemaMismatch {
            expected: expected.join(","),
            found: found.join(","),
        });
    }

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // header is line 1
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        if record.len() != expected.len() {
            return Err(Error::ParseLine {
                line: row,
                message: format!(
                    "expected {} fields, found {}",
                    expected.len(),
                    record.len()
                ),
            });
        }
        let sample_id = record[0].to_string();
        let mut features = Vec::with_capacity(schema.len());
        for j in 0..schema.len() {
            let cell = &record[j + 1];
            let v: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row,
                column: schema.features[j].name.clone(),
                value: cell.to_string(),
            })?;
            features.push(v);
        }
        let score_cell = &record[schema.len() + 1];
        let score: f64 = score_cell.trim().parse().map_err(|_| Error::NonNumericCell {
            row,
            column: "score".to_string(),
            value: score_cell.to_string(),
        })?;
        samples.push(Sample::new(sample_id, features, score));
    }
    Dataset::new(schema.clone(), samples, provenance)
}

/// Write a dataset CSV in the canonical column order.
pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    let header: Vec<&str> = std::iter::once("sample_id")
        .chain(dataset.schema.features.iter().map(|f| f.name.as_str()))
        .chain(std::iter::once("score"))
        .collect();
    writer.write_record(&header).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    for s in &dataset.samples {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        record.push(s.sample_id.clone());
        record.extend(s.features.iter().map(|v| format_float(*v)));
        record.push(format_float(s.score));
        writer.write_record(&record).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shortest round-trip decimal representation; deterministic for equal bits.
pub(crate) fn format_float(v: f64) -> String {
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Load a `sample_id,score` CSV into an id-keyed table. Scores must be
/// finite and within the calibrated band; duplicate ids are rejected.
pub fn load_score_table(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    let header = reader
        .headers()
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?
        .clone();
    let found: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    if found != ["sample_id", "score"] {
        return Err(Error::SchemaMismatch {
            expected: "sample_id,score".to_string(),
            found: found.join(","),
        });
    }
    let mut table = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        let id = record[0].to_string();
        let cell = &record[1];
        let score: f64 = cell.trim().parse().map_err(|_| Error::NonNumericCell {
            row,
            column: "score".to_string(),
            value: cell.to_string(),
        })?;
        if !score.is_finite() || !(SCORE_MIN..=SCORE_MAX).contains(&score) {
            return Err(Error::ScoreOutOfRange { row, score });
        }
        if table.insert(id.clone(), score).is_some() {
            return Err(Error::DuplicateSampleId { id });
        }
    }
    Ok(table)
}

/// Write an id-keyed score table as a `sample_id,score` CSV.
pub fn save_score_table(path: impl AsRef<Path>, table: &BTreeMap<String, f64>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    })?;
    writer
        .write_record(["sample_id", "score"])
        .map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
    for (id, score) in table {
        writer
            .write_record([id.as_str(), &format_float(*score)])
            .map_err(|e| Error::Csv {
                path: path.to_path_buf(),
                source: e,
            })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Descriptive statistics of one numeric column.
///
/// `sd` is the sample standard deviation (n-1 denominator). `skewness` is
/// the moment coefficient g1 = m3 / m2^(3/2) and `excess_kurtosis` the
/// moment coefficient g2 = m4 / m2^2 - 3, both over central moments with an
/// n denominator. Fields undefined at the input length (or when m2 = 0)
/// are absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skewness: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excess_kurtosis: Option<f64>,
}

/// Compute [`Moments`] for `values`. Errors on empty or non-finite input.
pub fn descriptive_stats(values: &[f64]) -> Result<Moments> {
    if values.is_empty() {
        return Err(Error::invalid("descriptive_stats: empty input"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("descriptive_stats: non-finite value"));
    }
    let n = values.len();
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;

    let sd = if n >= 2 {
        Some((m2 * nf / (nf - 1.0)).sqrt())
    } else {
        None
    };
    let skewness = if n >= 3 && m2 > 0.0 {
        Some(m3 / m2.powf(1.5))
    } else {
        None
    };
    let excess_kurtosis = if n >= 4 && m2 > 0.0 {
        Some(m4 / (m2 * m2) - 3.0)
    } else {
        None
    };
    Ok(Moments {
        n,
        mean,
        sd,
        skewness,
        excess_kurtosis,
    })
}

/// Empirical quantile with linear interpolation at position q*(n-1).
///
/// `xs` must be sorted ascending and non-empty; `q` in [0, 1]. This is the
/// single quantile convention used throughout the crate (IQR fences,
/// bootstrap percentiles).
pub fn quantile_sorted(xs: &[f64], q: f64) -> f64 {
    assert!(!xs.is_empty(), "quantile of empty slice");
    assert!((0.0..=1.0).contains(&q), "quantile q outside [0, 1]");
    let p = q * (xs.len() - 1) as f64;
    let lo = p.floor() as usize;
    let hi = p.ceil() as usize;
    if lo == hi {
        xs[lo]
    } else {
        let frac = p - lo as f64;
        xs[lo] + frac * (xs[hi] - xs[lo])
    }
}

/// How the standardization scaler is fit inside the training protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalerMode {
    /// Fit on the training split only (default; leak-free).
    #[serde(rename = "fit-on-train")]
    FitOnTrain,
    /// Fit on the whole dataset before splitting (protocol-faithful mode).
    #[serde(rename = "fit-on-all")]
    FitOnAll,
}

impl Default for ScalerMode {
    fn default() -> Self {
        ScalerMode::FitOnTrain
    }
}

impl fmt::Display for ScalerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalerMode::FitOnTrain => write!(f, "fit-on-train"),
            ScalerMode::FitOnAll => write!(f, "fit-on-all"),
        }
    }
}

impl std::str::FromStr for ScalerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit-on-train" => Ok(ScalerMode::FitOnTrain),
            "fit-on-all" => Ok(ScalerMode::FitOnAll),
            other => Err(Error::invalid(format!(
                "unknown scaler mode {other:?} (expected fit-on-train or fit-on-all)"
            ))),
        }
    }
}

/// Per-feature standardization parameters.
///
/// Means and population standard deviations (n denominator) per feature.
/// Constant features (max equals min on the fit data) transform to 0 and
/// invert back to their mean. Scores are never scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub constant: Vec<bool>,
}

impl Scaler {
    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    /// Identity scaler (mean 0, sd 1) for `len` features.
    pub fn identity(len: usize) -> Self {
        Scaler {
            means: vec![0.0; len],
            sds: vec![1.0; len],
            constant: vec![false; len],
        }
    }

    pub fn transform_value(&self, j: usize, v: f64) -> f64 {
        if self.constant[j] {
            0.0
        } else {
            (v - self.means[j]) / self.sds[j]
        }
    }

    pub fn invert_value(&self, j: usize, z: f64) -> f64 {
        if self.constant[j] {
            self.means[j]
        } else {
            z * self.sds[j] + self.means[j]
        }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.len(), "row width differs from scaler");
        (0..row.len()).map(|j| self.transform_value(j, row[j])).collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        assert_eq!(row.len(), self.len(), "row width differs from scaler");
        (0..row.len()).map(|j| self.invert_value(j, row[j])).collect()
    }
}

/// Fit a [`Scaler`] on raw value columns (all equal length, non-empty).
pub fn fit_scaler_columns(columns: &[Vec<f64>]) -> Result<Scaler> {
    if columns.iter().any(Vec::is_empty) {
        return Err(Error::invalid("fit_scaler: empty column"));
    }
    let mut means = Vec::with_capacity(columns.len());
    let mut sds = Vec::with_capacity(columns.len());
    let mut constant = Vec::with_capacity(columns.len());
    for col in columns {
        let n = col.len() as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in col {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let mean = col.iter().sum::<f64>() / n;
        let is_const = lo == hi;
        let sd = if is_const {
            0.0
        } else {
            (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
        };
        means.push(mean);
        sds.push(sd);
        constant.push(is_const);
    }
    Ok(Scaler {
        means,
        sds,
        constant,
    })
}

/// Fit a [`Scaler`] on every feature column of `dataset`.
pub fn fit_scaler(dataset: &Dataset) -> Result<Scaler> {
    if dataset.is_empty() {
        return Err(Error::invalid("fit_scaler: empty dataset"));
    }
    let p = dataset.schema.len();
    let columns: Vec<Vec<f64>> = (0..p).map(|j| dataset.feature_column(j)).collect();
    fit_scaler_columns(&columns)
}

/// Standardize every feature column; scores pass through unchanged.
pub fn apply_scaler(dataset: &Dataset, scaler: &Scaler) -> Result<Dataset> {
    if scaler.len() != dataset.schema.len() {
        return Err(Error::invalid(format!(
            "apply_scaler: scaler has {} features, dataset {}",
            scaler.len(),
            dataset.schema.len()
        )));
    }
    let samples = dataset
        .samples
        .iter()
        .map(|s| Sample::new(s.sample_id.clone(), scaler.transform_row(&s.features), s.score))
        .collect();
    // Standardized features can be validated like any others; reuse new().
    Ok(Dataset {
        schema: dataset.schema.clone(),
        samples,
        provenance: dataset.provenance,
    })
}

/// Seeded train/test split.
///
/// The test set takes `round(n * test_fraction)` samples (at least 1, at
/// most n-1) chosen by a uniform random permutation of the named seeded
/// generator; both splits keep the original dataset order.
pub fn split_dataset(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::invalid("split_dataset: need at least 2 samples"));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split_dataset: test_fraction {test_fraction} outside (0, 1)"
        )));
    }
    let raw = (n as f64 * test_fraction).round() as usize;
    let test_n = raw.clamp(1, n - 1);

    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = rng_from_seed(seed);
    fisher_yates(&mut indices, &mut rng);
    let mut test_idx: Vec<usize> = indices[..test_n].to_vec();
    let mut train_idx: Vec<usize> = indices[test_n..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();

    let pick = |idx: &[usize]| -> Vec<Sample> {
        idx.iter().map(|&i| dataset.samples[i].clone()).collect()
    };
    let train = Dataset {
        schema: dataset.schema.clone(),
        samples: pick(&train_idx),
        provenance: dataset.provenance,
    };
    let test = Dataset {
        schema: dataset.schema.clone(),
        samples: pick(&test_idx),
        provenance: dataset.provenance,
    };
    Ok((train, test))
}

pub(crate) fn fisher_yates<T>(xs: &mut [T], rng: &mut crate::rng::SeededRng) {
    use rand::Rng;
    for i in (1..xs.len()).rev() {
        let j = rng.gen_range(0..=i);
        xs.swap(i, j);
    }
}

/// Unit-width histogram over `[min, max]` of `values`.
///
/// The range is divided into `max(1, round(max - min))` equal bins (width as
/// close to 1.0 as the range allows); the last bin is closed. Returns
/// `(lo, hi, count)` per bin.
pub fn unit_bin_histogram(values: &[f64]) -> Result<Vec<(f64, f64, usize)>> {
    if values.is_empty() {
        return Err(Error::invalid("unit_bin_histogram: empty input"));
    }
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    let k = ((width).round() as usize).max(1);
    let bin_w = if width > 0.0 { width / k as f64 } else { 1.0 };
    let mut bins: Vec<(f64, f64, usize)> = (0..k)
        .map(|i| (lo + i as f64 * bin_w, lo + (i + 1) as f64 * bin_w, 0))
        .collect();
    for &v in values {
        let mut idx = if width > 0.0 {
            (((v - lo) / bin_w).floor() as usize).min(k - 1)
        } else {
            0
        };
        // Guard values that land exactly on an upper edge via rounding.
        if idx > 0 && v < bins[idx].0 {
            idx -= 1;
        }
        bins[idx].2 += 1;
    }
    Ok(bins)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toy_schema(p: usize) -> FeatureSchema {
        FeatureSchema {
            dimension: Dimension::FluDel,
            name: String::new(),
            features: (0..p)
                .map(|j| FeatureSpec::new(format!("f{j}"), format!("feature {j}")))
                .collect(),
        }
    }

    fn toy_dataset(n: usize, p: usize) -> Dataset {
        let samples = (0..n)
            .map(|i| {
                let features = (0..p).map(|j| (i * p + j) as f64 * 0.1).collect();
                Sample::new(format!("s{i}"), features, 1.0 + (i % 8) as f64 * 0.9)
            })
            .collect();
        Dataset::new(toy_schema(p), samples, DataProvenance::Raw).unwrap()
    }

    #[test]
    fn builtin_schema_lengths() {
        assert_eq!(FeatureSchema::infocom().len(), 5);
        assert_eq!(FeatureSchema::fludel().len(), 14);
        assert_eq!(FeatureSchema::tlqual().len(), 25);
        let with_total = FeatureSchema::tlqual_with_total_rttr();
        assert_eq!(with_total.len(), 26);
        assert!(with_total.name.contains("TOTAL_RTTR"));
        assert_eq!(with_total.features.last().unwrap().name, "TOTAL_RTTR");
    }

    #[test]
    fn tlqual_feature_order() {
        let names = FeatureSchema::tlqual()
            .feature_names()
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>();
        assert_eq!(
            &names[..9],
            &["NRW", "NMW", "NWSE", "NWOE", "MLS", "MLTU", "NTPS", "MLC", "NCPS"]
        );
        assert_eq!(names[9], "VO_RTTR");
        assert_eq!(names[10], "VO_RATIO");
        assert_eq!(names[23], "PC_RTTR");
        assert_eq!(names[24], "PC_RATIO");
    }

    #[test]
    fn schema_json_shape() {
        let s = FeatureSchema::infocom();
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["dimension"], "InfoCom");
        assert!(json.get("name").is_none());
        assert_eq!(json["features"][0]["name"], "chrF");
        let back: FeatureSchema = serde_json::from_value(json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn stats_simple_triple() {
        let m = descriptive_stats(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.mean, 2.0);
        assert!((m.sd.unwrap() - 1.0).abs() < 1e-15);
        assert!(m.skewness.unwrap().abs() < 1e-15);
        assert!(m.excess_kurtosis.is_none());
    }

    #[test]
    fn stats_known_eight_values() {
        // Central moments: m2 = 4, m3 = 5.25, m4 = 44.5.
        let m = descriptive_stats(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m.mean, 5.0);
        assert!((m.skewness.unwrap() - 0.65625).abs() < 1e-12);
        assert!((m.excess_kurtosis.unwrap() - (-0.21875)).abs() < 1e-12);
    }

    #[test]
    fn stats_short_and_constant_inputs() {
        let one = descriptive_stats(&[4.2]).unwrap();
        assert_eq!(one.mean, 4.2);
        assert!(one.sd.is_none() && one.skewness.is_none() && one.excess_kurtosis.is_none());

        let constant = descriptive_stats(&[2.0; 6]).unwrap();
        assert_eq!(constant.sd.unwrap(), 0.0);
        assert!(constant.skewness.is_none());
        assert!(constant.excess_kurtosis.is_none());

        assert!(descriptive_stats(&[]).is_err());
    }

    proptest! {
        #[test]
        fn stats_match_bruteforce(values in prop::collection::vec(-100.0f64..100.0, 4..200)) {
            let m = descriptive_stats(&values).unwrap();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let central = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
            let m2 = central(2);
            prop_assert!((m.mean - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
            let sd = (m2 * n / (n - 1.0)).sqrt();
            prop_assert!((m.sd.unwrap() - sd).abs() <= 1e-12 * (1.0 + sd.abs()));
            if m2 > 0.0 {
                let g1 = central(3) / m2.powf(1.5);
                let g2 = central(4) / (m2 * m2) - 3.0;
                prop_assert!((m.skewness.unwrap() - g1).abs() <= 1e-9 * (1.0 + g1.abs()));
                prop_assert!((m.excess_kurtosis.unwrap() - g2).abs() <= 1e-9 * (1.0 + g2.abs()));
            }
        }

        #[test]
        fn stats_permutation_invariant(mut values in prop::collection::vec(-50.0f64..50.0, 4..60), seed in 0u64..1000) {
            let before = descriptive_stats(&values).unwrap();
            let mut rng = rng_from_seed(seed);
            fisher_yates(&mut values, &mut rng);
            let after = descriptive_stats(&values).unwrap();
            prop_assert!((before.mean - after.mean).abs() <= 1e-12 * (1.0 + before.mean.abs()));
            prop_assert!((before.sd.unwrap() - after.sd.unwrap()).abs() <= 1e-10);
        }
    }

    #[test]
    fn scaler_two_point_population_sd() {
        let samples = vec![
            Sample::new("a", vec![1.0], 2.0),
            Sample::new("b", vec![3.0], 3.0),
        ];
        let ds = Dataset::new(toy_schema(1), samples, DataProvenance::Raw).unwrap();
        let scaler = fit_scaler(&ds).unwrap();
        assert_eq!(scaler.means[0], 2.0);
        assert_eq!(scaler.sds[0], 1.0);
        let std = apply_scaler(&ds, &scaler).unwrap();
        assert_eq!(std.samples[0].features[0], -1.0);
        assert_eq!(std.samples[1].features[0], 1.0);
        assert_eq!(std.samples[0].score, 2.0);
    }

    #[test]
    fn scaler_constant_feature_maps_to_zero() {
        let samples = vec![
            Sample::new("a", vec![7.0, 1.0], 2.0),
            Sample::new("b", vec![7.0, 5.0], 3.0),
        ];
        let ds = Dataset::new(toy_schema(2), samples, DataProvenance::Raw).unwrap();
        let scaler = fit_scaler(&ds).unwrap();
        assert!(scaler.constant[0]);
        let std = apply_scaler(&ds, &scaler).unwrap();
        assert_eq!(std.samples[0].features[0], 0.0);
        assert_eq!(std.samples[1].features[0], 0.0);
        assert_eq!(scaler.invert_value(0, 0.0), 7.0);
    }

    proptest! {
        #[test]
        fn scaler_round_trip(rows in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 3), 2..40)) {
            let samples: Vec<Sample> = rows.iter().enumerate()
                .map(|(i, r)| Sample::new(format!("s{i}"), r.clone(), 4.0))
                .collect();
            let ds = Dataset::new(toy_schema(3), samples, DataProvenance::Raw).unwrap();
            let scaler = fit_scaler(&ds).unwrap();
            if scaler.constant.iter().any(|&c| c) {
                return Ok(());
            }
            for s in &ds.samples {
                let back = scaler.invert_row(&scaler.transform_row(&s.features));
                for (orig, rt) in s.features.iter().zip(&back) {
                    prop_assert!((orig - rt).abs() <= 1e-12 * (1.0 + orig.abs()));
                }
            }
        }

        #[test]
        fn split_partitions_for_all_seeds(n in 2usize..60, seed in 0u64..500) {
            let ds = toy_dataset(n, 2);
            let (train, test) = split_dataset(&ds, 0.2, seed).unwrap();
            prop_assert_eq!(train.len() + test.len(), n);
            prop_assert!(test.len() >= 1);
            let mut ids: Vec<&str> = train.samples.iter().chain(&test.samples)
                .map(|s| s.sample_id.as_str()).collect();
            ids.sort_unstable();
            let mut expected: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
            expected.sort();
            let expected_refs: Vec<&str> = expected.iter().map(|s| s.as_str()).collect();
            prop_assert_eq!(ids, expected_refs);
        }
    }

    #[test]
    fn split_sizes_match_convention() {
        let (train, test) = split_dataset(&toy_dataset(500, 1), 0.2, 9).unwrap();
        assert_eq!(train.len(), 400);
        assert_eq!(test.len(), 100);

        let (train, test) = split_dataset(&toy_dataset(10, 1), 0.2, 9).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(test.len(), 2);
    }

    #[test]
    fn split_deterministic_per_seed() {
        let ds = toy_dataset(50, 2);
        let a = split_dataset(&ds, 0.2, 7).unwrap();
        let b = split_dataset(&ds, 0.2, 7).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = split_dataset(&ds, 0.2, 8).unwrap();
        assert_ne!(a.1, c.1, "different seed should move the test set");
    }

    #[test]
    fn quantile_linear_interpolation() {
        let xs: Vec<f64> = (1..=10).map(|v| v as f64).chain([20.0, 40.0]).collect();
        assert_eq!(quantile_sorted(&xs, 0.25), 3.75);
        assert_eq!(quantile_sorted(&xs, 0.75), 9.25);
        assert_eq!(quantile_sorted(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn csv_round_trip_preserves_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        let ds = toy_dataset(17, 4);
        save_dataset(&path, &ds).unwrap();
        let back = load_dataset(&path, &ds.schema, DataProvenance::Raw).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn score_table_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let table: BTreeMap<String, f64> =
            [("a".to_string(), 4.5), ("b".to_string(), 7.25)].into();
        save_score_table(&path, &table).unwrap();
        assert_eq!(load_score_table(&path).unwrap(), table);

        std::fs::write(&path, "sample_id,score\na,4.0\na,5.0\n").unwrap();
        assert!(matches!(
            load_score_table(&path).unwrap_err(),
            Error::DuplicateSampleId { .. }
        ));
        std::fs::write(&path, "sample_id,score\na,9.5\n").unwrap();
        assert!(matches!(
            load_score_table(&path).unwrap_err(),
            Error::ScoreOutOfRange { .. }
        ));
        std::fs::write(&path, "id,value\na,4.0\n").unwrap();
        assert!(matches!(
            load_score_table(&path).unwrap_err(),
            Error::SchemaMismatch { .. }
        ));
    }

    #[test]
    fn csv_header_mismatch_names_both() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "sample_id,bleu,score\na,0.5,4.0\n").unwrap();
        let schema = FeatureSchema {
            dimension: Dimension::InfoCom,
            name: String::new(),
            features: vec![FeatureSpec::new("chrF", "")],
        };
        let err = load_dataset(&path, &schema, DataProvenance::Raw).unwrap_err();
        match err {
            Error::SchemaMismatch { expected, found } => {
                assert!(expected.contains("chrF"));
                assert!(found.contains("bleu"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_non_numeric_cell_reports_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "sample_id,f0,score\na,0.5,4.0\nb,oops,4.0\n").unwrap();
        let err = load_dataset(&path, &toy_schema(1), DataProvenance::Raw).unwrap_err();
        match err {
            Error::NonNumericCell { row, column, value } => {
                assert_eq!(row, 3);
                assert_eq!(column, "f0");
                assert_eq!(value, "oops");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_and_score_range_rejected() {
        let schema = toy_schema(1);
        let dup = Dataset::new(
            schema.clone(),
            vec![
                Sample::new("a", vec![0.0], 4.0),
                Sample::new("a", vec![1.0], 4.0),
            ],
            DataProvenance::Raw,
        );
        assert!(matches!(dup, Err(Error::DuplicateSampleId { .. })));

        let out = Dataset::new(
            schema,
            vec![Sample::new("a", vec![0.0], 9.5)],
            DataProvenance::Raw,
        );
        assert!(matches!(out, Err(Error::ScoreOutOfRange { .. })));
    }

    #[test]
    fn unit_bins_cover_range() {
        let values: Vec<f64> = vec![3.0, 3.4, 4.2, 5.0, 5.9, 6.6, 7.2];
        let bins = unit_bin_histogram(&values).unwrap();
        assert_eq!(bins.len(), 4); // round(7.2 - 3.0) = 4
        assert_eq!(bins.iter().map(|b| b.2).sum::<usize>(), values.len());
        assert_eq!(bins.first().unwrap().0, 3.0);
        assert!((bins.last().unwrap().1 - 7.2).abs() < 1e-12);

        let constant = unit_bin_histogram(&[5.0; 4]).unwrap();
        assert_eq!(constant.len(), 1);
        assert_eq!(constant[0].2, 4);
    }
}
