//! Target-language-quality features: grammatical-error counts parsed from
//! bracketed annotation tuples, plus coarse syntactic and collocation
//! indices computed from ingested segmentation/collocation annotations.
//!
//! Chinese segmentation, parsing, and error detection happen upstream;
//! this module only parses their outputs and derives the numeric columns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{DataProvenance, Dataset, FeatureSchema, Sample};
use crate::error::{Error, Result};

/// Grammatical error categories: redundant, missing, selection, order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorType {
    R,
    M,
    S,
    W,
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorType::R => "R",
            ErrorType::M => "M",
            ErrorType::S => "S",
            ErrorType::W => "W",
        })
    }
}

impl FromStr for ErrorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "R" => Ok(ErrorType::R),
            "M" => Ok(ErrorType::M),
            "S" => Ok(ErrorType::S),
            "W" => Ok(ErrorType::W),
            other => Err(Error::invalid(format!(
                "unknown error type {other:?}, expected R, M, S, or W"
            ))),
        }
    }
}

/// One annotated grammatical error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEntry {
    pub sentence_id: u32,
    pub start_index: u32,
    pub end_index: u32,
    pub error_type: ErrorType,
    pub corrected_text: String,
    pub confidence: f64,
}

impl ErrorEntry {
    pub fn validate(&self) -> Result<()> {
        if self.start_index > self.end_index {
            return Err(Error::invalid(format!(
                "start_index {} exceeds end_index {}",
                self.start_index, self.end_index
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::invalid(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        // The one-tuple-per-line format cannot carry line breaks.
        if self.corrected_text.contains(['\n', '\r']) {
            return Err(Error::invalid("corrected text must be a single line"));
        }
        Ok(())
    }
}

/// Parse bracketed annotation tuples, one per line:
/// `[sentence_id, start, end, R|M|S|W, corrected text, confidence]`.
/// Blank lines and lines not starting with `[` are ignored. Corrected
/// text may be double-quoted to carry commas (internal quotes doubled).
pub fn parse_error_annotations(text: &str) -> Result<Vec<ErrorEntry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || !line.starts_with('[') {
            continue;
        }
        entries.push(parse_tuple(line, line_no)?);
    }
    Ok(entries)
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::ParseLine {
        line,
        message: message.into(),
    }
}

fn parse_tuple(line: &str, line_no: usize) -> Result<ErrorEntry> {
    let inner = line
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| parse_err(line_no, "tuple must be enclosed in brackets"))?;
    let fields = split_fields(inner);
    if fields.len() != 6 {
        return Err(parse_err(
            line_no,
            format!("expected 6 fields, found {}", fields.len()),
        ));
    }
    let int = |idx: usize, name: &str| -> Result<u32> {
        fields[idx]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("{name} {:?} is not an integer", fields[idx].trim())))
    };
    let sentence_id = int(0, "sentence_id")?;
    let start_index = int(1, "start_index")?;
    let end_index = int(2, "end_index")?;
    let error_type: ErrorType = fields[3]
        .trim()
        .parse()
        .map_err(|e| parse_err(line_no, format!("{e}")))?;
    let corrected_text = decode_text(fields[4].trim(), line_no)?;
    let confidence: f64 = fields[5]
        .trim()
        .parse()
        .map_err(|_| parse_err(line_no, format!("confidence {:?} is not a number", fields[5].trim())))?;
    let entry = ErrorEntry {
        sentence_id,
        start_index,
        end_index,
        error_type,
        corrected_text,
        confidence,
    };
    entry.validate().map_err(|e| parse_err(line_no, format!("{e}")))?;
    Ok(entry)
}

/// Split on top-level commas; commas inside double quotes do not split.
fn split_fields(inner: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut current = String::new();
    let mut in_quotes = false;
    for c in inner.chars() {
        match c {
            '"' => {
                in_quotes = !in_quotes;
                current.push(c);
            }
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut current));
            }
            _ => current.push(c),
        }
    }
    fields.push(current);
    fields
}

/// Decode a corrected-text field: quoted fields strip the outer quotes
/// and un-double internal ones, anything else is taken verbatim.
fn decode_text(field: &str, line_no: usize) -> Result<String> {
    if !field.starts_with('"') {
        if field.contains('"') {
            return Err(parse_err(line_no, "stray quote in corrected text"));
        }
        return Ok(field.to_string());
    }
    let mut out = String::new();
    let mut chars = field[1..].chars().peekable();
    let mut closed = false;
    while let Some(c) = chars.next() {
        if c == '"' {
            if chars.peek() == Some(&'"') {
                chars.next();
                out.push('"');
            } else {
                closed = true;
                break;
            }
        } else {
            out.push(c);
        }
    }
    if !closed || chars.next().is_some() {
        return Err(parse_err(line_no, "malformed quoted corrected text"));
    }
    Ok(out)
}

fn encode_text(text: &str) -> String {
    let needs_quotes = text.is_empty()
        || text.contains([',', '"'])
        || text != text.trim();
    if needs_quotes {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Render entries back to the bracketed one-per-line format.
pub fn format_error_annotations(entries: &[ErrorEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "[{}, {}, {}, {}, {}, {}]\n",
            e.sentence_id,
            e.start_index,
            e.end_index,
            e.error_type,
            encode_text(&e.corrected_text),
            e.confidence
        ));
    }
    out
}

pub fn load_error_annotations(path: impl AsRef<Path>) -> Result<Vec<ErrorEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_error_annotations(&text)
}

pub fn save_error_annotations(path: impl AsRef<Path>, entries: &[ErrorEntry]) -> Result<()> {
    let path = path.as_ref();
    for e in entries {
        e.validate()?;
    }
    std::fs::write(path, format_error_annotations(entries)).map_err(|e| Error::io(path, e))
}

/// One sample's error annotations: the id plus its bracketed-tuple
/// annotation block, embedded as a single JSONL row so a whole corpus
/// fits in one file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnnotationRow {
    pub sample_id: String,
    pub annotations: String,
}

/// Load a JSONL corpus of per-sample error annotations, parsing each
/// block. Duplicate sample ids are rejected.
pub fn load_error_annotation_corpus(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, Vec<ErrorEntry>>> {
    let rows: Vec<ErrorAnnotationRow> = load_jsonl(path.as_ref())?;
    let mut corpus = BTreeMap::new();
    for row in rows {
        let entries = parse_error_annotations(&row.annotations).map_err(|e| {
            Error::invalid(format!("sample {:?}: {e}", row.sample_id))
        })?;
        if corpus.insert(row.sample_id.clone(), entries).is_some() {
            return Err(Error::DuplicateSampleId { id: row.sample_id });
        }
    }
    Ok(corpus)
}

/// Write a per-sample error-annotation corpus as JSONL.
pub fn save_error_annotation_corpus(
    path: impl AsRef<Path>,
    corpus: &BTreeMap<String, Vec<ErrorEntry>>,
) -> Result<()> {
    let rows: Vec<ErrorAnnotationRow> = corpus
        .iter()
        .map(|(id, entries)| ErrorAnnotationRow {
            sample_id: id.clone(),
            annotations: format_error_annotations(entries),
        })
        .collect();
    save_jsonl(path.as_ref(), &rows)
}

/// The four error-count features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub nrw: u32,
    pub nmw: u32,
    pub nwse: u32,
    pub nwoe: u32,
}

/// Count entries at or above `min_confidence` per error type.
pub fn error_counts(entries: &[ErrorEntry], min_confidence: f64) -> ErrorCounts {
    debug_assert!((0.0..=1.0).contains(&min_confidence));
    let mut counts = ErrorCounts {
        nrw: 0,
        nmw: 0,
        nwse: 0,
        nwoe: 0,
    };
    for e in entries {
        if e.confidence < min_confidence {
            continue;
        }
        match e.error_type {
            ErrorType::R => counts.nrw += 1,
            ErrorType::M => counts.nmw += 1,
            ErrorType::S => counts.nwse += 1,
            ErrorType::W => counts.nwoe += 1,
        }
    }
    counts
}

/// Sentence/T-unit/clause segmentation of one cleaned transcript.
/// `sentences` nests T-units inside sentences and clause word counts
/// inside T-units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationAnnotation {
    pub sample_id: String,
    pub total_word_tokens: u32,
    pub sentences: Vec<Vec<Vec<u32>>>,
}

impl SegmentationAnnotation {
    pub fn validate(&self) -> Result<()> {
        let mut sum = 0u64;
        for (si, sentence) in self.sentences.iter().enumerate() {
            if sentence.is_empty() {
                return Err(Error::invalid(format!(
                    "segmentation {:?}: sentence {si} has no T-units",
                    self.sample_id
                )));
            }
            for (ti, tunit) in sentence.iter().enumerate() {
                if tunit.is_empty() {
                    return Err(Error::invalid(format!(
                        "segmentation {:?}: sentence {si} T-unit {ti} has no clauses",
                        self.sample_id
                    )));
                }
                sum += tunit.iter().map(|&c| c as u64).sum::<u64>();
            }
        }
        if sum != self.total_word_tokens as u64 {
            return Err(Error::invalid(format!(
                "segmentation {:?}: clause word counts sum to {sum}, expected {}",
                self.sample_id, self.total_word_tokens
            )));
        }
        Ok(())
    }

    pub fn n_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn n_tunits(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn n_clauses(&self) -> usize {
        self.sentences
            .iter()
            .flat_map(|s| s.iter().map(Vec::len))
            .sum()
    }
}

/// The five coarse-grained syntactic indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoarseMetrics {
    pub mls: f64,
    pub mltu: f64,
    pub ntps: f64,
    pub mlc: f64,
    pub ncps: f64,
}

/// Mean lengths and per-sentence counts from a segmentation annotation.
pub fn coarse_grained_metrics(seg: &SegmentationAnnotation) -> Result<CoarseMetrics> {
    seg.validate()?;
    let sentences = seg.n_sentences();
    if sentences == 0 {
        return Err(Error::invalid(format!(
            "segmentation {:?} has zero sentences",
            seg.sample_id
        )));
    }
    let words = seg.total_word_tokens as f64;
    let tunits = seg.n_tunits() as f64;
    let clauses = seg.n_clauses() as f64;
    let sentences = sentences as f64;
    Ok(CoarseMetrics {
        mls: words / sentences,
        mltu: words / tunits,
        ntps: tunits / sentences,
        mlc: words / clauses,
        ncps: clauses / sentences,
    })
}

/// Per-category collocation occurrence lists. Each occurrence is a
/// normalized combination string; distinct strings are distinct types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollocationAnnotation {
    pub sample_id: String,
    #[serde(rename = "VO")]
    pub vo: Vec<String>,
    #[serde(rename = "SP")]
    pub sp: Vec<String>,
    #[serde(rename = "AN")]
    pub an: Vec<String>,
    #[serde(rename = "AP")]
    pub ap: Vec<String>,
    #[serde(rename = "CN")]
    pub cn: Vec<String>,
    #[serde(rename = "PP")]
    pub pp: Vec<String>,
    #[serde(rename = "PV")]
    pub pv: Vec<String>,
    #[serde(rename = "PC")]
    pub pc: Vec<String>,
}

impl CollocationAnnotation {
    /// Empty annotation for the given sample.
    pub fn empty(sample_id: impl Into<String>) -> Self {
        CollocationAnnotation {
            sample_id: sample_id.into(),
            vo: Vec::new(),
            sp: Vec::new(),
            an: Vec::new(),
            ap: Vec::new(),
            cn: Vec::new(),
            pp: Vec::new(),
            pv: Vec::new(),
            pc: Vec::new(),
        }
    }

    /// Occurrence lists in canonical category order
    /// (VO, SP, AN, AP, CN, PP, PV, PC).
    pub fn occurrences(&self) -> [&[String]; 8] {
        [
            &self.vo, &self.sp, &self.an, &self.ap, &self.cn, &self.pp, &self.pv, &self.pc,
        ]
        .map(|v: &Vec<String>| v.as_slice())
    }
}

/// The sixteen fine-grained collocation features plus the aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollocationMetrics {
    /// X_RTTR per category in canonical order: types over sqrt(tokens).
    pub rttr: [f64; 8],
    /// X_RATIO per category: category tokens over total word tokens.
    pub ratio: [f64; 8],
    /// Aggregate RTTR over all categories pooled.
    pub total_rttr: f64,
}

/// Root type-token ratios and combination ratios per category.
pub fn collocation_metrics(
    coll: &CollocationAnnotation,
    total_word_tokens: u32,
) -> Result<CollocationMetrics> {
    if total_word_tokens == 0 {
        return Err(Error::invalid(format!(
            "collocation {:?}: total word tokens must be positive",
            coll.sample_id
        )));
    }
    let mut rttr = [0.0f64; 8];
    let mut ratio = [0.0f64; 8];
    let mut pooled_types = 0usize;
    let mut pooled_tokens = 0usize;
    for (i, occurrences) in coll.occurrences().iter().enumerate() {
        let tokens = occurrences.len();
        let types = occurrences.iter().collect::<BTreeSet<_>>().len();
        if tokens > 0 {
            rttr[i] = types as f64 / (tokens as f64).sqrt();
            ratio[i] = tokens as f64 / total_word_tokens as f64;
        }
        pooled_types += types;
        pooled_tokens += tokens;
    }
    let total_rttr = if pooled_tokens > 0 {
        pooled_types as f64 / (pooled_tokens as f64).sqrt()
    } else {
        0.0
    };
    Ok(CollocationMetrics {
        rttr,
        ratio,
        total_rttr,
    })
}

/// The assembled feature values for one sample, in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlqualFeatures {
    pub counts: ErrorCounts,
    pub coarse: CoarseMetrics,
    pub collocation: CollocationMetrics,
    /// Present only when the extended 26-column schema is selected.
    pub total_rttr: Option<f64>,
}

impl TlqualFeatures {
    /// Flatten to the canonical column order: the four error counts, the
    /// five coarse indices, then RTTR/RATIO pairs per category, then the
    /// optional aggregate.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![
            self.counts.nrw as f64,
            self.counts.nmw as f64,
            self.counts.nwse as f64,
            self.counts.nwoe as f64,
            self.coarse.mls,
            self.coarse.mltu,
            self.coarse.ntps,
            self.coarse.mlc,
            self.coarse.ncps,
        ];
        for i in 0..8 {
            v.push(self.collocation.rttr[i]);
            v.push(self.collocation.ratio[i]);
        }
        if let Some(t) = self.total_rttr {
            v.push(t);
        }
        v
    }
}

/// Options for TLQual feature assembly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlqualOptions {
    /// Entries below this confidence are dropped from the error counts.
    pub min_confidence: f64,
    /// Append the pooled TOTAL_RTTR column (26-column schema).
    pub include_total_rttr: bool,
}

impl Default for TlqualOptions {
    fn default() -> Self {
        TlqualOptions {
            min_confidence: 0.0,
            include_total_rttr: false,
        }
    }
}

/// Assemble one sample's features from its three annotation sources.
/// The segmentation and collocation annotations must agree on sample id.
pub fn build_tlqual_features(
    seg: &SegmentationAnnotation,
    coll: &CollocationAnnotation,
    entries: &[ErrorEntry],
    options: &TlqualOptions,
) -> Result<TlqualFeatures> {
    if seg.sample_id != coll.sample_id {
        return Err(Error::invalid(format!(
            "sample id mismatch: segmentation {:?} vs collocation {:?}",
            seg.sample_id, coll.sample_id
        )));
    }
    if !(0.0..=1.0).contains(&options.min_confidence) {
        return Err(Error::invalid(format!(
            "min_confidence {} outside [0, 1]",
            options.min_confidence
        )));
    }
    let coarse = coarse_grained_metrics(seg)?;
    let collocation = collocation_metrics(coll, seg.total_word_tokens)?;
    Ok(TlqualFeatures {
        counts: error_counts(entries, options.min_confidence),
        coarse,
        collocation,
        total_rttr: options
            .include_total_rttr
            .then_some(collocation.total_rttr),
    })
}

/// Assemble the TLQual dataset from per-sample features plus a score
/// table. Every row must carry the aggregate column, or none may.
pub fn build_tlqual_dataset(
    rows: &[(String, TlqualFeatures)],
    scores: &BTreeMap<String, f64>,
) -> Result<Dataset> {
    let missing: Vec<String> = rows
        .iter()
        .filter(|(id, _)| !scores.contains_key(id))
        .map(|(id, _)| id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds { ids: missing });
    }
    let with_total = rows
        .first()
        .map(|(_, f)| f.total_rttr.is_some())
        .unwrap_or(false);
    let schema = if with_total {
        FeatureSchema::tlqual_with_total_rttr()
    } else {
        FeatureSchema::tlqual()
    };
    let mut samples = Vec::with_capacity(rows.len());
    for (id, f) in rows {
        let vector = f.to_vector();
        if vector.len() != schema.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} features", schema.len()),
                found: format!("{} for sample {id:?}", vector.len()),
            });
        }
        samples.push(Sample::new(id.clone(), vector, scores[id]));
    }
    Dataset::new(schema, samples, DataProvenance::Raw)
}

/// Join the three annotation streams by sample id and build the scored
/// dataset. Rows follow segmentation order; a segmentation without a
/// matching collocation or error-annotation entry is a missing-id error.
pub fn assemble_tlqual_dataset(
    segmentations: &[SegmentationAnnotation],
    collocations: &[CollocationAnnotation],
    errors: &BTreeMap<String, Vec<ErrorEntry>>,
    scores: &BTreeMap<String, f64>,
    options: &TlqualOptions,
) -> Result<Dataset> {
    let coll_by_id: BTreeMap<&str, &CollocationAnnotation> = collocations
        .iter()
        .map(|c| (c.sample_id.as_str(), c))
        .collect();
    let mut rows = Vec::with_capacity(segmentations.len());
    for seg in segmentations {
        let coll = coll_by_id
            .get(seg.sample_id.as_str())
            .ok_or_else(|| Error::MissingIds {
                ids: vec![seg.sample_id.clone()],
            })?;
        let entries = errors.get(&seg.sample_id).ok_or_else(|| Error::MissingIds {
            ids: vec![seg.sample_id.clone()],
        })?;
        rows.push((
            seg.sample_id.clone(),
            build_tlqual_features(seg, coll, entries, options)?,
        ));
    }
    build_tlqual_dataset(&rows, scores)
}

fn load_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut items = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: T = serde_json::from_str(&line).map_err(|e| Error::ParseLine {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        items.push(item);
    }
    Ok(items)
}

fn save_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("item serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load segmentation annotations from JSONL, validating each.
pub fn load_segmentations(path: impl AsRef<Path>) -> Result<Vec<SegmentationAnnotation>> {
    let items: Vec<SegmentationAnnotation> = load_jsonl(path.as_ref())?;
    for item in &items {
        item.validate()?;
    }
    Ok(items)
}

pub fn save_segmentations(
    path: impl AsRef<Path>,
    items: &[SegmentationAnnotation],
) -> Result<()> {
    for item in items {
        item.validate()?;
    }
    save_jsonl(path.as_ref(), items)
}

/// Load collocation annotations from JSONL.
pub fn load_collocations(path: impl AsRef<Path>) -> Result<Vec<CollocationAnnotation>> {
    load_jsonl(path.as_ref())
}

pub fn save_collocations(
    path: impl AsRef<Path>,
    items: &[CollocationAnnotation],
) -> Result<()> {
    save_jsonl(path.as_ref(), items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(ty: ErrorType, confidence: f64) -> ErrorEntry {
        ErrorEntry {
            sentence_id: 1,
            start_index: 0,
            end_index: 1,
            error_type: ty,
            corrected_text: "x".into(),
            confidence,
        }
    }

    #[test]
    fn parses_reference_tuples() {
        let text = "[1, 6, 7, R, 学校, 0.95]\n[2, 4, 6, W, 比我还快, 0.85]\n";
        let entries = parse_error_annotations(text).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(
            entries[0],
            ErrorEntry {
                sentence_id: 1,
                start_index: 6,
                end_index: 7,
                error_type: ErrorType::R,
                corrected_text: "学校".into(),
                confidence: 0.95,
            }
        );
        assert_eq!(entries[1].error_type, ErrorType::W);
        assert_eq!(entries[1].corrected_text, "比我还快");
        assert_eq!(entries[1].confidence, 0.85);
    }

    #[test]
    fn ignores_blank_and_prose_lines() {
        let text = "annotator notes\n\n  [1, 0, 1, M, 的, 0.8]\nend of file\n";
        let entries = parse_error_annotations(text).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].error_type, ErrorType::M);
    }

    #[test]
    fn quoted_text_carries_commas_and_quotes() {
        let text = "[1, 2, 5, S, \"你好, 世界\", 0.7]\n[2, 0, 0, M, \"he said \"\"hi\"\"\", 0.6]\n";
        let entries = parse_error_annotations(text).unwrap();
        assert_eq!(entries[0].corrected_text, "你好, 世界");
        assert_eq!(entries[1].corrected_text, "he said \"hi\"");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let cases = [
            ("[1, 9, 2, R, x, 0.5]", "start_index"),
            ("[1, 1, 2, Q, x, 0.5]", "unknown error type"),
            ("[1, 1, 2, R, x, 1.5]", "confidence"),
            ("[1, 1, 2, R, x]", "expected 6 fields"),
            ("[a, 1, 2, R, x, 0.5]", "not an integer"),
            ("[1, 1, 2, R, \"open, 0.5]", "expected 6 fields"),
        ];
        for (line, needle) in cases {
            let text = format!("\n{line}\n");
            let err = parse_error_annotations(&text).unwrap_err();
            match err {
                Error::ParseLine { line: n, message } => {
                    assert_eq!(n, 2, "line number for {line:?}");
                    assert!(
                        message.contains(needle),
                        "message {message:?} should mention {needle:?}"
                    );
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn round_trip_preserves_entries() {
        let text = "[1, 6, 7, R, 学校, 0.95]\n[2, 4, 6, W, 比我还快, 0.85]\n";
        let entries = parse_error_annotations(text).unwrap();
        let rendered = format_error_annotations(&entries);
        assert_eq!(rendered, text);
        assert_eq!(parse_error_annotations(&rendered).unwrap(), entries);
    }

    #[test]
    fn error_annotation_corpus_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("errors.jsonl");
        let mut corpus = BTreeMap::new();
        corpus.insert(
            "s1".to_string(),
            parse_error_annotations("[1, 6, 7, R, 学校, 0.95]\n").unwrap(),
        );
        corpus.insert("s2".to_string(), Vec::new());
        save_error_annotation_corpus(&path, &corpus).unwrap();
        assert_eq!(load_error_annotation_corpus(&path).unwrap(), corpus);

        std::fs::write(
            &path,
            "{\"sample_id\":\"s1\",\"annotations\":\"[1, 1, 2, Q, x, 0.5]\"}\n",
        )
        .unwrap();
        let err = load_error_annotation_corpus(&path).unwrap_err();
        assert!(err.to_string().contains("s1"));
    }

    #[test]
    fn error_counts_filter_by_confidence() {
        let entries = vec![
            entry(ErrorType::R, 0.95),
            entry(ErrorType::S, 0.90),
            entry(ErrorType::S, 0.6),
        ];
        let c = error_counts(&entries, 0.7);
        assert_eq!((c.nrw, c.nmw, c.nwse, c.nwoe), (1, 0, 1, 0));
        let all = error_counts(&entries, 0.0);
        assert_eq!((all.nrw, all.nmw, all.nwse, all.nwoe), (1, 0, 2, 0));
        let none = error_counts(&[], 0.0);
        assert_eq!((none.nrw, none.nmw, none.nwse, none.nwoe), (0, 0, 0, 0));
    }

    fn seg(total: u32, sentences: Vec<Vec<Vec<u32>>>) -> SegmentationAnnotation {
        SegmentationAnnotation {
            sample_id: "s1".into(),
            total_word_tokens: total,
            sentences,
        }
    }

    #[test]
    fn coarse_metrics_reference_profile() {
        // 40 words, 2 sentences, 3 T-units, 4 clauses.
        let s = seg(40, vec![vec![vec![12, 8], vec![10]], vec![vec![10]]]);
        let m = coarse_grained_metrics(&s).unwrap();
        assert_eq!(m.mls, 20.0);
        assert!((m.mltu - 40.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.ntps, 1.5);
        assert_eq!(m.mlc, 10.0);
        assert_eq!(m.ncps, 2.0);
    }

    #[test]
    fn coarse_metrics_degenerate() {
        let s = seg(7, vec![vec![vec![7]]]);
        let m = coarse_grained_metrics(&s).unwrap();
        assert_eq!(
            (m.mls, m.mltu, m.ntps, m.mlc, m.ncps),
            (7.0, 7.0, 1.0, 7.0, 1.0)
        );
    }

    #[test]
    fn clause_rich_profile_puts_mlc_below_mltu() {
        // 154 words over 9 T-units and 11 clauses: per-clause mean drops
        // below per-T-unit mean exactly because clauses outnumber T-units.
        let mut sentence = vec![vec![14, 14], vec![14, 14]];
        sentence.extend(std::iter::repeat(vec![14]).take(7));
        let s = seg(154, vec![sentence]);
        let m = coarse_grained_metrics(&s).unwrap();
        assert_eq!(m.mlc, 14.0);
        assert!((m.mltu - 17.11).abs() < 0.01);
        assert!(m.mlc < m.mltu);
    }

    #[test]
    fn segmentation_validation_rejections() {
        assert!(seg(39, vec![vec![vec![12, 8], vec![10]], vec![vec![10]]])
            .validate()
            .is_err());
        assert!(seg(10, vec![vec![]]).validate().is_err());
        assert!(seg(10, vec![vec![vec![10]], vec![vec![]]]).validate().is_err());
        let zero = seg(0, vec![]);
        assert!(zero.validate().is_ok());
        assert!(coarse_grained_metrics(&zero).is_err());
    }

    #[test]
    fn segmentation_json_shape() {
        let s = seg(40, vec![vec![vec![12, 8], vec![10]], vec![vec![10]]]);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            "{\"sample_id\":\"s1\",\"total_word_tokens\":40,\"sentences\":[[[12,8],[10]],[[10]]]}"
        );
        let back: SegmentationAnnotation = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn collocation_reference_values() {
        let mut coll = CollocationAnnotation::empty("s1");
        coll.vo = vec!["看-书".into(), "看-书".into(), "吃-饭".into()];
        coll.sp = vec!["价格-上涨".into()];
        let m = collocation_metrics(&coll, 30).unwrap();
        assert!((m.rttr[0] - 2.0 / 3.0f64.sqrt()).abs() < 1e-12);
        assert!((m.rttr[0] - 1.1547).abs() < 1e-4);
        assert_eq!(m.ratio[0], 0.1);
        assert_eq!(m.rttr[1], 1.0);
        // Empty categories are zero on both indices.
        assert_eq!(m.rttr[4], 0.0);
        assert_eq!(m.ratio[4], 0.0);
        // Pooled: 3 types over 4 tokens.
        assert!((m.total_rttr - 3.0 / 4.0f64.sqrt()).abs() < 1e-12);
        assert!(collocation_metrics(&coll, 0).is_err());
    }

    #[test]
    fn collocation_json_requires_exact_keys() {
        let good = r#"{"sample_id":"s1","VO":["看-书"],"SP":[],"AN":[],"AP":[],"CN":[],"PP":[],"PV":[],"PC":[]}"#;
        let coll: CollocationAnnotation = serde_json::from_str(good).unwrap();
        assert_eq!(coll.vo.len(), 1);
        let missing = r#"{"sample_id":"s1","VO":[],"SP":[],"AN":[],"AP":[],"CN":[],"PP":[],"PV":[]}"#;
        assert!(serde_json::from_str::<CollocationAnnotation>(missing).is_err());
        let extra = r#"{"sample_id":"s1","VO":[],"SP":[],"AN":[],"AP":[],"CN":[],"PP":[],"PV":[],"PC":[],"XX":[]}"#;
        assert!(serde_json::from_str::<CollocationAnnotation>(extra).is_err());
    }

    fn demo_features(options: &TlqualOptions) -> TlqualFeatures {
        let s = seg(40, vec![vec![vec![12, 8], vec![10]], vec![vec![10]]]);
        let mut coll = CollocationAnnotation::empty("s1");
        coll.vo = vec!["看-书".into(), "看-书".into(), "吃-饭".into()];
        let entries = vec![entry(ErrorType::R, 0.95), entry(ErrorType::W, 0.4)];
        build_tlqual_features(&s, &coll, &entries, options).unwrap()
    }

    #[test]
    fn assembled_vector_matches_schema() {
        let f = demo_features(&TlqualOptions::default());
        let v = f.to_vector();
        assert_eq!(v.len(), FeatureSchema::tlqual().len());
        assert_eq!(v[0], 1.0);
        assert_eq!(v[3], 1.0);
        assert_eq!(v[4], 20.0);
        let schema = FeatureSchema::tlqual();
        assert_eq!(v[schema.feature_index("VO_RTTR").unwrap()], f.collocation.rttr[0]);
        assert_eq!(v[schema.feature_index("VO_RATIO").unwrap()], 0.075);
        assert_eq!(v[schema.feature_index("PC_RATIO").unwrap()], 0.0);

        let extended = demo_features(&TlqualOptions {
            min_confidence: 0.0,
            include_total_rttr: true,
        });
        let ev = extended.to_vector();
        assert_eq!(ev.len(), FeatureSchema::tlqual_with_total_rttr().len());
        assert_eq!(*ev.last().unwrap(), extended.collocation.total_rttr);
    }

    #[test]
    fn min_confidence_drops_low_entries() {
        let f = demo_features(&TlqualOptions {
            min_confidence: 0.7,
            include_total_rttr: false,
        });
        assert_eq!(f.counts.nrw, 1);
        assert_eq!(f.counts.nwoe, 0);
    }

    #[test]
    fn mismatched_sample_ids_name_both() {
        let s = seg(7, vec![vec![vec![7]]]);
        let coll = CollocationAnnotation::empty("other");
        let err =
            build_tlqual_features(&s, &coll, &[], &TlqualOptions::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s1") && msg.contains("other"), "{msg}");
    }

    #[test]
    fn dataset_assembly_and_missing_scores() {
        let f = demo_features(&TlqualOptions::default());
        let rows = vec![("s1".to_string(), f)];
        let err = build_tlqual_dataset(&rows, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingIds { ids } if ids == vec!["s1".to_string()]));
        let mut scores = BTreeMap::new();
        scores.insert("s1".to_string(), 6.5);
        let ds = build_tlqual_dataset(&rows, &scores).unwrap();
        assert_eq!(ds.schema, FeatureSchema::tlqual());
        assert_eq!(ds.samples[0].score, 6.5);
    }

    #[test]
    fn annotation_jsonl_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let seg_path = dir.path().join("seg.jsonl");
        let coll_path = dir.path().join("coll.jsonl");
        let segs = vec![seg(7, vec![vec![vec![7]]])];
        let colls = vec![CollocationAnnotation::empty("s1")];
        save_segmentations(&seg_path, &segs).unwrap();
        save_collocations(&coll_path, &colls).unwrap();
        assert_eq!(load_segmentations(&seg_path).unwrap(), segs);
        assert_eq!(load_collocations(&coll_path).unwrap(), colls);
    }

    fn arb_entry() -> impl Strategy<Value = ErrorEntry> {
        (
            0u32..50,
            0u32..30,
            0u32..30,
            prop_oneof![
                Just(ErrorType::R),
                Just(ErrorType::M),
                Just(ErrorType::S),
                Just(ErrorType::W)
            ],
            "[a-z学校比我还快,\" ]{0,10}",
            0u32..=100,
        )
            .prop_map(|(sid, a, b, ty, text, conf)| ErrorEntry {
                sentence_id: sid,
                start_index: a.min(b),
                end_index: a.max(b),
                error_type: ty,
                corrected_text: text,
                confidence: conf as f64 / 100.0,
            })
    }

    proptest! {
        #[test]
        fn annotation_round_trip_is_identity(
            entries in prop::collection::vec(arb_entry(), 0..8)
        ) {
            let rendered = format_error_annotations(&entries);
            let parsed = parse_error_annotations(&rendered).unwrap();
            prop_assert_eq!(parsed, entries);
        }

        #[test]
        fn rttr_bounds_and_ratio_zero_link(
            occurrences in prop::collection::vec("[abc]{1,2}", 0..12),
            total in 1u32..200,
        ) {
            let mut coll = CollocationAnnotation::empty("s");
            coll.an = occurrences.clone();
            let m = collocation_metrics(&coll, total).unwrap();
            prop_assert_eq!(m.rttr[2] == 0.0, m.ratio[2] == 0.0);
            let t = occurrences.len() as f64;
            prop_assert!(m.rttr[2] <= t.sqrt() + 1e-12);
            let distinct = occurrences.iter().collect::<BTreeSet<_>>().len();
            if distinct == occurrences.len() && !occurrences.is_empty() {
                prop_assert!((m.rttr[2] - t.sqrt()).abs() < 1e-12);
            }
        }

        #[test]
        fn coarse_identities_hold(
            sentences in prop::collection::vec(
                prop::collection::vec(
                    prop::collection::vec(1u32..20, 1..4),
                    1..4,
                ),
                1..5,
            )
        ) {
            let total: u32 = sentences
                .iter()
                .flat_map(|s| s.iter().flat_map(|t| t.iter()))
                .sum();
            let s = seg(total, sentences);
            let m = coarse_grained_metrics(&s).unwrap();
            prop_assert!((m.mls - m.mltu * m.ntps).abs() <= 1e-12 * m.mls.abs().max(1.0));
            prop_assert!((m.mls - m.mlc * m.ncps).abs() <= 1e-12 * m.mls.abs().max(1.0));
        }
    }
}
