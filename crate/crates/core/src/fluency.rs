//! Temporal fluency features from time-aligned transcripts.
//!
//! A [`TimeAlignedTranscript`] carries speech and filled-pause tokens with
//! second-resolution spans plus disjoint silence intervals (the unfilled
//! pauses). [`compute_fluency_features`] turns one transcript into the
//! fourteen delivery features.
//!
//! Conventions: the speech rate SR counts every syllable including filled
//! pauses; the articulation rate AR and mean length of syllables MLS use
//! pruned syllables (speech tokens only). Filled pauses have no minimum
//! duration; unfilled pauses are expected to already respect the 0.35 s
//! floor (the detector in [`crate::audio`] enforces it). Outlier counts
//! use quartiles interpolated at `q * (n - 1)`: "relatively long" means
//! inside `(Q3 + 1.5 IQR, Q3 + 3 IQR]`, "particularly long" beyond
//! `Q3 + 3 IQR`.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{quantile_sorted, DataProvenance, Dataset, FeatureSchema, Sample};
use crate::error::{Error, Result};

/// Token class in a time-aligned transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Speech,
    FilledPause,
}

/// One aligned token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub start_s: f64,
    pub end_s: f64,
    pub syllables: u32,
    pub kind: TokenKind,
}

impl Token {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// A silence interval in seconds, serialized as `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct SilenceInterval {
    pub start_s: f64,
    pub end_s: f64,
}

impl SilenceInterval {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

impl From<[f64; 2]> for SilenceInterval {
    fn from(v: [f64; 2]) -> Self {
        SilenceInterval {
            start_s: v[0],
            end_s: v[1],
        }
    }
}

impl From<SilenceInterval> for [f64; 2] {
    fn from(v: SilenceInterval) -> Self {
        [v.start_s, v.end_s]
    }
}

/// Tokens plus silences for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAlignedTranscript {
    pub sample_id: String,
    pub total_duration_s: f64,
    pub tokens: Vec<Token>,
    pub silences: Vec<SilenceInterval>,
}

impl TimeAlignedTranscript {
    /// Check the structural invariants: positive duration; tokens ordered,
    /// non-overlapping, inside `[0, total_duration_s]`, with positive spans
    /// and at least one syllable on filled pauses; silences ordered,
    /// disjoint, inside the duration, and not overlapping any token.
    pub fn validate(&self) -> Result<()> {
        let id = &self.sample_id;
        if !(self.total_duration_s > 0.0) || !self.total_duration_s.is_finite() {
            return Err(Error::invalid(format!(
                "transcript {id:?}: total duration must be positive"
            )));
        }
        let mut prev_end = 0.0f64;
        for (i, t) in self.tokens.iter().enumerate() {
            if !(t.start_s.is_finite() && t.end_s.is_finite()) || t.end_s <= t.start_s {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: token {i} has an invalid span [{}, {}]",
                    t.start_s, t.end_s
                )));
            }
            if t.start_s < prev_end - 1e-12 {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: token {i} overlaps the previous token"
                )));
            }
            if t.start_s < 0.0 || t.end_s > self.total_duration_s + 1e-9 {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: token {i} lies outside [0, {}]",
                    self.total_duration_s
                )));
            }
            if t.kind == TokenKind::FilledPause && t.syllables == 0 {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: filled-pause token {i} needs at least one syllable"
                )));
            }
            prev_end = t.end_s;
        }
        let mut prev_end = 0.0f64;
        for (i, s) in self.silences.iter().enumerate() {
            if !(s.start_s.is_finite() && s.end_s.is_finite()) || s.end_s <= s.start_s {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: silence {i} has an invalid span"
                )));
            }
            if s.start_s < prev_end - 1e-12 {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: silence {i} overlaps the previous silence"
                )));
            }
            if s.start_s < 0.0 || s.end_s > self.total_duration_s + 1e-9 {
                return Err(Error::invalid(format!(
                    "transcript {id:?}: silence {i} lies outside the duration"
                )));
            }
            for (j, t) in self.tokens.iter().enumerate() {
                if s.start_s < t.end_s - 1e-12 && s.end_s > t.start_s + 1e-12 {
                    return Err(Error::invalid(format!(
                        "transcript {id:?}: silence {i} overlaps token {j}"
                    )));
                }
            }
            prev_end = s.end_s;
        }
        Ok(())
    }
}

/// The fourteen delivery features.
///
/// Counts are integers; ratio features with an empty denominator are
/// absent rather than zero: `ar` when articulation time is zero, `mls`
/// when there are no pruned syllables, `mlr` when no run contains a
/// syllable. `mlfp`/`mlup` are 0.0 when there is no pause of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluencyFeatures {
    /// Speech rate: all syllables (including filled pauses) per second.
    pub sr: f64,
    /// Articulation rate: pruned syllables per second of articulation.
    pub ar: Option<f64>,
    /// Phonation time ratio.
    pub ptr: f64,
    /// Mean length of syllables: articulation time per pruned syllable.
    pub mls: Option<f64>,
    /// Mean syllable count of runs delimited by unfilled pauses.
    pub mlr: Option<f64>,
    /// Pruned syllable count (speech tokens only).
    pub psc: u32,
    pub nfp: u32,
    pub nup: u32,
    pub mlfp: f64,
    pub mlup: f64,
    pub nrlfp: u32,
    pub nrlup: u32,
    pub nrsa: u32,
    pub npsa: u32,
}

impl FluencyFeatures {
    /// Feature vector in [`FeatureSchema::fludel`] order. Errors if a
    /// denominator-dependent feature is absent.
    pub fn to_vector(&self) -> Result<[f64; 14]> {
        let ar = self
            .ar
            .ok_or_else(|| Error::invalid("AR is undefined (zero articulation time)"))?;
        let mls = self
            .mls
            .ok_or_else(|| Error::invalid("MLS is undefined (no pruned syllables)"))?;
        let mlr = self
            .mlr
            .ok_or_else(|| Error::invalid("MLR is undefined (no syllable-bearing runs)"))?;
        Ok([
            self.sr,
            ar,
            self.ptr,
            mls,
            mlr,
            f64::from(self.psc),
            f64::from(self.nfp),
            f64::from(self.nup),
            self.mlfp,
            self.mlup,
            f64::from(self.nrlfp),
            f64::from(self.nrlup),
            f64::from(self.nrsa),
            f64::from(self.npsa),
        ])
    }
}

/// Count values inside `(Q3 + 1.5 IQR, Q3 + 3 IQR]` and beyond
/// `Q3 + 3 IQR`. Inputs with fewer than one value return `(0, 0)`.
pub fn iqr_outlier_counts(values: &[f64]) -> (usize, usize) {
    if values.is_empty() {
        return (0, 0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let fence1 = q3 + 1.5 * iqr;
    let fence2 = q3 + 3.0 * iqr;
    let mut relative = 0;
    let mut particular = 0;
    for &v in values {
        if v > fence2 {
            particular += 1;
        } else if v > fence1 {
            relative += 1;
        }
    }
    (relative, particular)
}

/// Extract the fourteen delivery features from one transcript.
pub fn compute_fluency_features(t: &TimeAlignedTranscript) -> Result<FluencyFeatures> {
    t.validate()?;
    let duration = t.total_duration_s;

    let mut psc = 0u32;
    let mut filled_syllables = 0u32;
    let mut nfp = 0u32;
    let mut fp_durations = Vec::new();
    let mut filled_time = 0.0;
    let mut syllable_durations = Vec::new();
    for tok in &t.tokens {
        match tok.kind {
            TokenKind::Speech => {
                psc += tok.syllables;
                if tok.syllables > 0 {
                    // Uniform per-syllable spans within the token.
                    let per = tok.duration_s() / f64::from(tok.syllables);
                    syllable_durations.extend(std::iter::repeat(per).take(tok.syllables as usize));
                }
            }
            TokenKind::FilledPause => {
                nfp += 1;
                filled_syllables += tok.syllables;
                fp_durations.push(tok.duration_s());
                filled_time += tok.duration_s();
            }
        }
    }

    let nup = t.silences.len() as u32;
    let up_durations: Vec<f64> = t.silences.iter().map(|s| s.duration_s()).collect();
    let unfilled_time: f64 = up_durations.iter().sum();

    let total_syllables = f64::from(psc + filled_syllables);
    let sr = total_syllables / duration;
    let phonation_time = duration - unfilled_time;
    let ptr = phonation_time / duration;
    let articulation_time = phonation_time - filled_time;
    let ar = if articulation_time > 0.0 {
        Some(f64::from(psc) / articulation_time)
    } else {
        None
    };
    let mls = if psc > 0 {
        Some(articulation_time / f64::from(psc))
    } else {
        None
    };

    // Runs: maximal token sequences not interrupted by a silence interval.
    let mut run_syllables: Vec<u32> = Vec::new();
    let mut current: Option<u32> = None;
    for (i, tok) in t.tokens.iter().enumerate() {
        let broke = if i == 0 {
            false
        } else {
            let prev_end = t.tokens[i - 1].end_s;
            t.silences
                .iter()
                .any(|s| s.start_s < tok.start_s && s.end_s > prev_end)
        };
        if broke {
            if let Some(r) = current.take() {
                run_syllables.push(r);
            }
        }
        let syl = if tok.kind == TokenKind::Speech {
            tok.syllables
        } else {
            0
        };
        current = Some(current.unwrap_or(0) + syl);
    }
    if let Some(r) = current {
        run_syllables.push(r);
    }
    let bearing: Vec<u32> = run_syllables.into_iter().filter(|&r| r > 0).collect();
    let mlr = if bearing.is_empty() {
        None
    } else {
        Some(bearing.iter().map(|&r| f64::from(r)).sum::<f64>() / bearing.len() as f64)
    };

    let mlfp = if fp_durations.is_empty() {
        0.0
    } else {
        filled_time / fp_durations.len() as f64
    };
    let mlup = if up_durations.is_empty() {
        0.0
    } else {
        unfilled_time / up_durations.len() as f64
    };

    let (nrlfp, _) = iqr_outlier_counts(&fp_durations);
    let (nrlup, _) = iqr_outlier_counts(&up_durations);
    let (nrsa, npsa) = iqr_outlier_counts(&syllable_durations);

    Ok(FluencyFeatures {
        sr,
        ar,
        ptr,
        mls,
        mlr,
        psc,
        nfp,
        nup,
        mlfp,
        mlup,
        nrlfp: nrlfp as u32,
        nrlup: nrlup as u32,
        nrsa: nrsa as u32,
        npsa: npsa as u32,
    })
}

/// Load transcripts from JSONL (one transcript object per line).
pub fn load_transcripts_jsonl(path: impl AsRef<Path>) -> Result<Vec<TimeAlignedTranscript>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut transcripts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: TimeAlignedTranscript =
            serde_json::from_str(&line).map_err(|e| Error::ParseLine {
                line: i + 1,
                message: format!("{}: {e}", path.display()),
            })?;
        t.validate()?;
        transcripts.push(t);
    }
    Ok(transcripts)
}

/// Write transcripts as JSONL.
pub fn save_transcripts_jsonl(
    path: impl AsRef<Path>,
    transcripts: &[TimeAlignedTranscript],
) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in transcripts {
        out.push_str(&serde_json::to_string(t).expect("transcript serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Assemble the FluDel dataset from transcripts plus a score table.
/// Missing scores are reported all at once.
pub fn build_fludel_dataset(
    transcripts: &[TimeAlignedTranscript],
    scores: &BTreeMap<String, f64>,
) -> Result<Dataset> {
    let missing: Vec<String> = transcripts
        .iter()
        .filter(|t| !scores.contains_key(&t.sample_id))
        .map(|t| t.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds { ids: missing });
    }
    let mut samples = Vec::with_capacity(transcripts.len());
    for t in transcripts {
        let features = compute_fluency_features(t)?
            .to_vector()
            .map_err(|e| Error::invalid(format!("sample {:?}: {e}", t.sample_id)))?;
        samples.push(Sample::new(
            t.sample_id.clone(),
            features.to_vec(),
            scores[&t.sample_id],
        ));
    }
    Dataset::new(FeatureSchema::fludel(), samples, DataProvenance::Raw)
}
