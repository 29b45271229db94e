//! Information-completeness features: chrF plus ingested neural metrics.
//!
//! chrF is computed here from scratch; the four neural metrics (BLEURT-20,
//! BERTScore, CometKiwi, xCOMET) come from upstream scoring runs and are
//! ingested from CSV, never recomputed.
//!
//! chrF convention: all whitespace is removed from both strings, character
//! n-grams of order 1..=max_n are counted as multisets, precision/recall
//! use clipped counts, and the score is the beta-weighted harmonic mean of
//! the order-averaged precision and recall. Orders where neither string
//! has an n-gram are skipped; an order where only one side has n-grams
//! contributes 0 to the other side's mean.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{DataProvenance, Dataset, FeatureSchema, Sample};
use crate::error::{Error, Result};

/// chrF parameters; defaults are max_n = 6, beta = 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChrfParams {
    pub max_n: usize,
    pub beta: f64,
}

impl Default for ChrfParams {
    fn default() -> Self {
        ChrfParams { max_n: 6, beta: 2.0 }
    }
}

/// Character n-gram F-score of `hypothesis` against `reference`.
///
/// The reference must contain at least one non-whitespace character. An
/// empty (or all-whitespace) hypothesis scores 0.
pub fn chrf(hypothesis: &str, reference: &str, params: &ChrfParams) -> Result<f64> {
    if params.max_n == 0 {
        return Err(Error::invalid("chrf: max_n must be at least 1"));
    }
    if !(params.beta > 0.0) {
        return Err(Error::invalid("chrf: beta must be positive"));
    }
    let hyp: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let rf: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if rf.is_empty() {
        return Err(Error::invalid("chrf: reference is empty"));
    }

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=params.max_n {
        let hyp_total = hyp.len().saturating_sub(n - 1);
        let ref_total = rf.len().saturating_sub(n - 1);
        if hyp_total == 0 && ref_total == 0 {
            continue;
        }
        orders += 1;
        let overlap = clipped_overlap(&hyp, &rf, n);
        precision_sum += if hyp_total > 0 {
            overlap / hyp_total as f64
        } else {
            0.0
        };
        recall_sum += if ref_total > 0 {
            overlap / ref_total as f64
        } else {
            0.0
        };
    }
    if orders == 0 {
        // Hypothesis empty and reference shorter than every order is
        // impossible (order 1 always exists for a non-empty reference).
        return Ok(0.0);
    }
    let chr_p = precision_sum / orders as f64;
    let chr_r = recall_sum / orders as f64;
    let b2 = params.beta * params.beta;
    let denom = b2 * chr_p + chr_r;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((1.0 + b2) * chr_p * chr_r / denom)
}

/// Clipped multiset n-gram overlap between two character sequences.
fn clipped_overlap(hyp: &[char], rf: &[char], n: usize) -> f64 {
    if hyp.len() < n || rf.len() < n {
        return 0.0;
    }
    let mut ref_counts: HashMap<&[char], usize> = HashMap::new();
    for gram in rf.windows(n) {
        *ref_counts.entry(gram).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for gram in hyp.windows(n) {
        if let Some(c) = ref_counts.get_mut(gram) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap as f64
}

/// One hypothesis/reference pair, serialized as JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPair {
    pub sample_id: String,
    pub hypothesis: String,
    pub reference: String,
}

impl SegmentPair {
    pub fn validate(&self) -> Result<()> {
        if self.reference.chars().all(char::is_whitespace) {
            return Err(Error::invalid(format!(
                "segment pair {:?}: reference is empty",
                self.sample_id
            )));
        }
        Ok(())
    }
}

/// Load segment pairs from JSONL (one object per line).
pub fn load_segment_pairs(path: impl AsRef<Path>) -> Result<Vec<SegmentPair>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair: SegmentPair = serde_json::from_str(&line).map_err(|e| Error::ParseLine {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?;
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Write segment pairs as JSONL.
pub fn save_segment_pairs(path: impl AsRef<Path>, pairs: &[SegmentPair]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for p in pairs {
        out.push_str(&serde_json::to_string(p).expect("pair serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// The four ingested neural metric values for one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralMetrics {
    pub bleurt20: f64,
    pub bertscore: f64,
    pub cometkiwi: f64,
    pub xcomet: f64,
}

const NEURAL_HEADER: [&str; 5] = ["sample_id", "bleurt20", "bertscore", "cometkiwi", "xcomet"];

/// Read the neural metrics CSV (`sample_id,bleurt20,bertscore,cometkiwi,
/// xcomet`). Duplicate ids and non-numeric cells are errors; an empty data
/// section returns an empty map with a warning.
pub fn ingest_neural_metrics(path: impl AsRef<Path>) -> Result<BTreeMap<String, NeuralMetrics>> {
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
    let found: Vec<&str> = header.iter().collect();
    if found != NEURAL_HEADER {
        return Err(Error::SchemaMismatch {
            expected: NEURAL_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut map = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            source: e,
        })?;
        if record.len() != NEURAL_HEADER.len() {
            return Err(Error::ParseLine {
                line: row,
                message: format!("expected 5 fields, found {}", record.len()),
            });
        }
        let id = record[0].to_string();
        let mut values = [0.0f64; 4];
        for (j, v) in values.iter_mut().enumerate() {
            let cell = &record[j + 1];
            *v = cell.trim().parse().map_err(|_| Error::NonNumericCell {
                row,
                column: NEURAL_HEADER[j + 1].to_string(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonNumericCell {
                    row,
                    column: NEURAL_HEADER[j + 1].to_string(),
                    value: cell.to_string(),
                });
            }
        }
        let prev = map.insert(
            id.clone(),
            NeuralMetrics {
                bleurt20: values[0],
                bertscore: values[1],
                cometkiwi: values[2],
                xcomet: values[3],
            },
        );
        if prev.is_some() {
            return Err(Error::DuplicateSampleId { id });
        }
    }
    if map.is_empty() {
        log::warn!("neural metrics file {} has no data rows", path.display());
    }
    Ok(map)
}

/// The five InfoCom feature values for one sample, in schema order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityFeatures {
    pub chrf: f64,
    pub bleurt20: f64,
    pub bertscore: f64,
    pub cometkiwi: f64,
    pub xcomet: f64,
}

impl FidelityFeatures {
    pub fn to_vector(&self) -> [f64; 5] {
        [
            self.chrf,
            self.bleurt20,
            self.bertscore,
            self.cometkiwi,
            self.xcomet,
        ]
    }
}

/// Compute chrF per pair and join with the neural metrics. Pairs missing
/// from the metric table are reported all at once.
pub fn build_fidelity_features(
    pairs: &[SegmentPair],
    metrics: &BTreeMap<String, NeuralMetrics>,
    params: &ChrfParams,
) -> Result<Vec<(String, FidelityFeatures)>> {
    let missing: Vec<String> = pairs
        .iter()
        .filter(|p| !metrics.contains_key(&p.sample_id))
        .map(|p| p.sample_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds { ids: missing });
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        pair.validate()?;
        let m = &metrics[&pair.sample_id];
        rows.push((
            pair.sample_id.clone(),
            FidelityFeatures {
                chrf: chrf(&pair.hypothesis, &pair.reference, params)?,
                bleurt20: m.bleurt20,
                bertscore: m.bertscore,
                cometkiwi: m.cometkiwi,
                xcomet: m.xcomet,
            },
        ));
    }
    Ok(rows)
}

/// Assemble the InfoCom dataset from feature rows plus a score table.
pub fn build_infocom_dataset(
    rows: &[(String, FidelityFeatures)],
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
    let samples = rows
        .iter()
        .map(|(id, f)| Sample::new(id.clone(), f.to_vector().to_vec(), scores[id]))
        .collect();
    Dataset::new(FeatureSchema::infocom(), samples, DataProvenance::Raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn p(max_n: usize, beta: f64) -> ChrfParams {
        ChrfParams { max_n, beta }
    }

    /// Quadratic-time oracle: explicit n-gram lists, greedy multiset
    /// matching without hashing.
    fn chrf_oracle(hyp: &str, rf: &str, max_n: usize, beta: f64) -> f64 {
        let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
        let r: Vec<char> = rf.chars().filter(|c| !c.is_whitespace()).collect();
        let mut psum = 0.0;
        let mut rsum = 0.0;
        let mut orders = 0;
        for n in 1..=max_n {
            let hgrams: Vec<&[char]> = h.windows(n).collect();
            let rgrams: Vec<&[char]> = r.windows(n).collect();
            if hgrams.is_empty() && rgrams.is_empty() {
                continue;
            }
            orders += 1;
            let mut used = vec![false; rgrams.len()];
            let mut overlap = 0.0;
            for g in &hgrams {
                for (j, rg) in rgrams.iter().enumerate() {
                    if !used[j] && g == rg {
                        used[j] = true;
                        overlap += 1.0;
                        break;
                    }
                }
            }
            if !hgrams.is_empty() {
                psum += overlap / hgrams.len() as f64;
            }
            if !rgrams.is_empty() {
                rsum += overlap / rgrams.len() as f64;
            }
        }
        if orders == 0 {
            return 0.0;
        }
        let cp = psum / orders as f64;
        let cr = rsum / orders as f64;
        let b2 = beta * beta;
        if b2 * cp + cr == 0.0 {
            0.0
        } else {
            (1.0 + b2) * cp * cr / (b2 * cp + cr)
        }
    }

    #[test]
    fn worked_two_gram_example() {
        // P1 = 1, R1 = 2/3, P2 = 1, R2 = 1/2 -> chrP = 1, chrR = 7/12.
        let score = chrf("ab", "abc", &p(2, 2.0)).unwrap();
        assert!((score - 7.0 / 11.0).abs() < 1e-12);
        assert!((score - 0.6364).abs() < 1e-4);
    }

    #[test]
    fn identical_and_empty_hypothesis() {
        let params = ChrfParams::default();
        assert_eq!(chrf("同传质量评估", "同传质量评估", &params).unwrap(), 1.0);
        assert_eq!(chrf("a", "a", &params).unwrap(), 1.0);
        assert_eq!(chrf("", "abc", &params).unwrap(), 0.0);
        assert_eq!(chrf("   ", "abc", &params).unwrap(), 0.0);
        assert!(chrf("abc", "", &params).is_err());
        assert!(chrf("abc", " \t ", &params).is_err());
    }

    #[test]
    fn whitespace_is_stripped_everywhere() {
        let params = ChrfParams::default();
        let a = chrf("ab cd", "abcd", &params).unwrap();
        assert_eq!(a, 1.0);
        let b = chrf("  ab\tcd \n", "a bcd", &params).unwrap();
        assert_eq!(b, 1.0);
    }

    #[test]
    fn matches_oracle_on_random_pairs() {
        let mut rng = rng_from_seed(404);
        let alphabet: Vec<char> = "ab cd字词x".chars().collect();
        for _ in 0..50 {
            let len_h = rng.gen_range(0..18);
            let len_r = rng.gen_range(1..18);
            let hyp: String = (0..len_h)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect();
            let mut rf: String = (0..len_r)
                .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
                .collect();
            if rf.chars().all(char::is_whitespace) {
                rf.push('z');
            }
            let max_n = rng.gen_range(1..=6);
            let got = chrf(&hyp, &rf, &p(max_n, 2.0)).unwrap();
            let want = chrf_oracle(&hyp, &rf, max_n, 2.0);
            assert!(
                (got - want).abs() <= 1e-12,
                "hyp {hyp:?} ref {rf:?} n {max_n}: {got} vs {want}"
            );
        }
    }

    proptest! {
        #[test]
        fn chrf_stays_in_unit_interval(hyp in ".{0,12}", rf in ".{1,12}") {
            prop_assume!(!rf.chars().all(char::is_whitespace));
            let score = chrf(&hyp, &rf, &ChrfParams::default()).unwrap();
            prop_assert!((0.0..=1.0).contains(&score));
        }

        #[test]
        fn chrf_whitespace_insensitive(body in "[a-d]{1,10}", pad in "[ \t]{0,3}") {
            let params = ChrfParams::default();
            let base = chrf(&body, &body, &params).unwrap();
            let padded = format!("{pad}{body}{pad}");
            prop_assert_eq!(chrf(&padded, &body, &params).unwrap(), base);
        }
    }

    fn write_metrics(dir: &std::path::Path, body: &str) -> std::path::PathBuf {
        let path = dir.join("neural.csv");
        std::fs::write(
            &path,
            format!("sample_id,bleurt20,bertscore,cometkiwi,xcomet\n{body}"),
        )
        .unwrap();
        path
    }

    #[test]
    fn neural_ingestion_happy_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_metrics(dir.path(), "s1,0.51,0.96,0.51,0.18\ns2,0.4,0.9,0.5,0.2\n");
        let map = ingest_neural_metrics(&path).unwrap();
        assert_eq!(map.len(), 2);
        assert_eq!(map["s1"].bleurt20, 0.51);
        assert_eq!(map["s2"].xcomet, 0.2);
    }

    #[test]
    fn neural_ingestion_errors() {
        let dir = tempfile::tempdir().unwrap();
        let wrong_header = dir.path().join("bad.csv");
        std::fs::write(&wrong_header, "id,bleurt20,bertscore,cometkiwi,xcomet\n").unwrap();
        assert!(matches!(
            ingest_neural_metrics(&wrong_header).unwrap_err(),
            Error::SchemaMismatch { .. }
        ));

        let dup = write_metrics(dir.path(), "s1,0.5,0.9,0.5,0.1\ns1,0.5,0.9,0.5,0.1\n");
        assert!(matches!(
            ingest_neural_metrics(&dup).unwrap_err(),
            Error::DuplicateSampleId { .. }
        ));

        let non_numeric = write_metrics(dir.path(), "s1,high,0.9,0.5,0.1\n");
        match ingest_neural_metrics(&non_numeric).unwrap_err() {
            Error::NonNumericCell { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "bleurt20");
            }
            other => panic!("unexpected {other:?}"),
        }

        let empty = write_metrics(dir.path(), "");
        assert!(ingest_neural_metrics(&empty).unwrap().is_empty());
    }

    #[test]
    fn fidelity_rows_and_missing_ids() {
        let pairs = vec![
            SegmentPair {
                sample_id: "s1".into(),
                hypothesis: "abc".into(),
                reference: "abc".into(),
            },
            SegmentPair {
                sample_id: "s2".into(),
                hypothesis: "x".into(),
                reference: "xy".into(),
            },
        ];
        let mut metrics = BTreeMap::new();
        metrics.insert(
            "s1".to_string(),
            NeuralMetrics {
                bleurt20: 0.5,
                bertscore: 0.9,
                cometkiwi: 0.5,
                xcomet: 0.2,
            },
        );
        let err = build_fidelity_features(&pairs, &metrics, &ChrfParams::default()).unwrap_err();
        match err {
            Error::MissingIds { ids } => assert_eq!(ids, vec!["s2".to_string()]),
            other => panic!("unexpected {other:?}"),
        }

        metrics.insert(
            "s2".to_string(),
            NeuralMetrics {
                bleurt20: 0.4,
                bertscore: 0.8,
                cometkiwi: 0.4,
                xcomet: 0.1,
            },
        );
        let rows = build_fidelity_features(&pairs, &metrics, &ChrfParams::default()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].1.chrf, 1.0);
        assert_eq!(rows[0].1.to_vector()[1], 0.5);

        let mut scores = BTreeMap::new();
        scores.insert("s1".to_string(), 5.0);
        scores.insert("s2".to_string(), 6.0);
        let ds = build_infocom_dataset(&rows, &scores).unwrap();
        assert_eq!(ds.schema, FeatureSchema::infocom());
        assert_eq!(ds.len(), 2);
    }

    #[test]
    fn segment_pairs_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs = vec![SegmentPair {
            sample_id: "s1".into(),
            hypothesis: "他 比 我 快".into(),
            reference: "他比我还快".into(),
        }];
        save_segment_pairs(&path, &pairs).unwrap();
        assert_eq!(load_segment_pairs(&path).unwrap(), pairs);
    }
}
