//! Config-driven end-to-end runs with a digest manifest.
//!
//! [`run_pipeline`] executes the stage sequence data -> augment ->
//! train -> evaluate -> explain -> plot from a single JSON
//! [`PipelineConfig`]. Stages whose inputs are supplied directly are
//! short-circuited: a prebuilt feature CSV skips extraction, and
//! disabling augmentation trains on the raw rows. Every file the run
//! writes is listed in the returned [`RunManifest`] with its SHA-256
//! digest (the manifest itself, written last as `manifest.json`, is the
//! one exception since it cannot contain its own hash). Given equal
//! config and inputs, all artifacts and digests are byte-identical
//! across runs.
//!
//! A failed stage aborts the run with the stage name attached, removes
//! everything the run had written, and releases the output-directory
//! lock. The lock file (`.interpqa.lock`) keeps concurrent runs from
//! sharing an output directory; a crash can leave it behind, in which
//! case the error message names the file to delete.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{augment_dataset, train_cvae, CvaeConfig};
use crate::data::{
    load_dataset, load_score_table, save_dataset, DataProvenance, Dataset, Dimension,
    FeatureSchema, ScalerMode,
};
use crate::error::{Error, Result};
use crate::explain::{
    bootstrap_ci, global_importance, local_explanation, BackgroundSet, ExplainOptions,
    GlobalImportance, LocalExplanation, ShapMethod, DEFAULT_BOOTSTRAP_RESAMPLES,
    DEFAULT_PERMUTATIONS,
};
use crate::fidelity::{
    build_fidelity_features, build_infocom_dataset, ingest_neural_metrics, load_segment_pairs,
    ChrfParams,
};
use crate::fluency::{build_fludel_dataset, load_transcripts_jsonl};
use crate::models::{
    default_grid, run_training_protocol, save_model, ModelKind, ModelParams, ProtocolOptions,
};
use crate::plot;
use crate::synth::generate_synthetic_corpus;
use crate::tlqual::{
    assemble_tlqual_dataset, load_collocations, load_error_annotation_corpus,
    load_segmentations, TlqualOptions,
};

/// Features shown in the global plots; the rest are cut off.
pub const MAX_PLOT_FEATURES: usize = 15;

/// Waterfall budget: top ten named bars plus the aggregate.
pub const MAX_WATERFALL_BARS: usize = 11;

const LOCK_FILE: &str = ".interpqa.lock";

/// Where the raw dataset comes from. Exactly one source may be set;
/// a prebuilt dataset or a synthetic corpus short-circuits extraction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputConfig {
    /// Prebuilt feature CSV in the canonical column order.
    pub dataset: Option<PathBuf>,
    pub fluency: Option<FluencyInputs>,
    pub fidelity: Option<FidelityInputs>,
    pub tlqual: Option<TlqualInputs>,
    pub synthetic: Option<SyntheticInputs>,
}

/// Raw inputs for fluency extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluencyInputs {
    /// JSONL of time-aligned transcripts.
    pub transcripts: PathBuf,
    /// `sample_id,score` CSV.
    pub scores: PathBuf,
}

/// Raw inputs for fidelity extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidelityInputs {
    /// JSONL of hypothesis/reference segment pairs.
    pub segments: PathBuf,
    /// CSV of precomputed neural metric columns.
    pub neural_metrics: PathBuf,
    /// `sample_id,score` CSV.
    pub scores: PathBuf,
}

/// Raw inputs for target-language-quality extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlqualInputs {
    /// JSONL of segmentation annotations.
    pub segmentations: PathBuf,
    /// JSONL of collocation annotations.
    pub collocations: PathBuf,
    /// JSONL of per-sample error-annotation blocks.
    pub errors: PathBuf,
    /// `sample_id,score` CSV.
    pub scores: PathBuf,
    #[serde(default)]
    pub min_confidence: f64,
    #[serde(default)]
    pub include_total_rttr: bool,
}

/// Bundled synthetic corpus in place of real inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticInputs {
    pub n: usize,
    pub seed: u64,
}

/// CVAE augmentation switch and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    pub enabled: bool,
    /// Total rows after appending synthetic samples.
    pub target_total: usize,
    /// Seed for conditional generation (training uses `cvae.seed`).
    pub seed: u64,
    pub cvae: CvaeConfig,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            enabled: true,
            target_total: 500,
            seed: 0,
            cvae: CvaeConfig::default(),
        }
    }
}

/// Model family, hyperparameter grid, and training seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// None searches the kind's default grid.
    pub grid: Option<Vec<ModelParams>>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Gbt,
            grid: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// The search grid to use: the kind's default when none is given,
    /// otherwise the configured candidates after a kind check.
    pub fn effective_grid(&self) -> Result<Vec<ModelParams>> {
        match &self.grid {
            None => Ok(default_grid(self.kind)),
            Some(grid) => {
                if grid.is_empty() {
                    return Err(Error::invalid("pipeline: model grid is empty"));
                }
                for params in grid {
                    if params.kind() != self.kind {
                        return Err(Error::invalid(format!(
                            "pipeline: grid entry of kind {} under model kind {}",
                            params.kind().name(),
                            self.kind.name()
                        )));
                    }
                    params.validate()?;
                }
                Ok(grid.clone())
            }
        }
    }
}

/// Held-out split and cross-validation shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub test_fraction: f64,
    pub k_folds: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            test_fraction: 0.2,
            k_folds: 5,
        }
    }
}

/// Attribution method, bootstrap, and background policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExplanationConfig {
    /// None dispatches by model kind and width.
    pub method: Option<ShapMethod>,
    pub n_permutations: usize,
    pub seed: u64,
    /// 0 disables confidence intervals; otherwise at least 2.
    pub bootstrap_resamples: usize,
    pub bootstrap_seed: u64,
    /// None applies the module's default cap.
    pub background_cap: Option<usize>,
    pub background_seed: u64,
    /// Samples that additionally get local reports and plots.
    pub local_sample_ids: Vec<String>,
}

impl Default for ExplanationConfig {
    fn default() -> Self {
        ExplanationConfig {
            method: None,
            n_permutations: DEFAULT_PERMUTATIONS,
            seed: 0,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            bootstrap_seed: 0,
            background_cap: None,
            background_seed: 0,
            local_sample_ids: Vec::new(),
        }
    }
}

/// The whole run in one JSON document. CLI flags override fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub dimension: Dimension,
    #[serde(default)]
    pub inputs: InputConfig,
    #[serde(default)]
    pub augmentation: AugmentationConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub explanation: ExplanationConfig,
    #[serde(default)]
    pub scaler_mode: ScalerMode,
    pub output_dir: PathBuf,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let inp = &self.inputs;
        let sources = [
            inp.dataset.is_some(),
            inp.fluency.is_some(),
            inp.fidelity.is_some(),
            inp.tlqual.is_some(),
            inp.synthetic.is_some(),
        ]
        .iter()
        .filter(|set| **set)
        .count();
        if sources == 0 {
            return Err(Error::invalid("pipeline: no input source configured"));
        }
        if sources > 1 {
            return Err(Error::invalid(
                "pipeline: exactly one input source may be configured",
            ));
        }
        let wanted = if inp.fluency.is_some() {
            Some(Dimension::FluDel)
        } else if inp.fidelity.is_some() {
            Some(Dimension::InfoCom)
        } else if inp.tlqual.is_some() {
            Some(Dimension::TlQual)
        } else {
            None
        };
        if let Some(required) = wanted {
            if self.dimension != required {
                return Err(Error::invalid(format!(
                    "pipeline: the configured extraction inputs belong to {required}, \
                     but the dimension is {}",
                    self.dimension
                )));
            }
        }
        if self.augmentation.enabled {
            if self.augmentation.target_total == 0 {
                return Err(Error::invalid("pipeline: augmentation target_total is 0"));
            }
            self.augmentation.cvae.validate()?;
        }
        self.model.effective_grid()?;
        if !(self.evaluation.test_fraction > 0.0 && self.evaluation.test_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "pipeline: test_fraction {} outside (0, 1)",
                self.evaluation.test_fraction
            )));
        }
        if self.evaluation.k_folds < 2 {
            return Err(Error::invalid("pipeline: k_folds must be at least 2"));
        }
        if self.explanation.n_permutations == 0 {
            return Err(Error::invalid("pipeline: n_permutations must be positive"));
        }
        if self.explanation.bootstrap_resamples == 1 {
            return Err(Error::invalid(
                "pipeline: bootstrap_resamples must be 0 (off) or at least 2",
            ));
        }
        if self.output_dir.as_os_str().is_empty() {
            return Err(Error::invalid("pipeline: output_dir is empty"));
        }
        let mut names = BTreeSet::new();
        for id in &self.explanation.local_sample_ids {
            if !names.insert(sanitize_file_stem(id)) {
                return Err(Error::invalid(format!(
                    "pipeline: local sample ids collide after filename sanitization ({id:?})"
                )));
            }
        }
        Ok(())
    }
}

/// One emitted or consumed file: path (relative to the output directory
/// for artifacts, as configured for external inputs) plus SHA-256.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: String,
    pub sha256: String,
}

/// One executed stage: its seed (when the stage draws randomness),
/// consumed inputs, emitted outputs, and wall-clock time. `wall_ms` is
/// informational and never participates in digests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub inputs: Vec<ArtifactRecord>,
    pub outputs: Vec<ArtifactRecord>,
    pub wall_ms: u64,
}

/// The run's full provenance: tool version, config digest, the
/// provenance of the dataset the model trained on, and per-stage
/// records covering every written artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub dimension: Dimension,
    pub data_provenance: DataProvenance,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    /// Flat artifact-path -> digest map over all stage outputs.
    pub fn artifact_digests(&self) -> BTreeMap<String, String> {
        self.stages
            .iter()
            .flat_map(|s| s.outputs.iter())
            .map(|a| (a.path.clone(), a.sha256.clone()))
            .collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Replace anything outside [A-Za-z0-9._-] so a sample id is safe in a
/// file name.
fn sanitize_file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn stage_err(stage: &str, source: Error) -> Error {
    Error::Pipeline {
        stage: stage.to_string(),
        source: Box::new(source),
    }
}

/// Holds the output-directory lock for the lifetime of a run.
#[derive(Debug)]
struct DirLock {
    lock_path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let lock_path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&lock_path)
        {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(DirLock { lock_path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::OutputLocked {
                path: dir.to_path_buf(),
                lock: lock_path,
            }),
            Err(e) => Err(Error::io(&lock_path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.lock_path);
    }
}

struct RunState<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
    stages: Vec<StageRecord>,
}

impl RunState<'_> {
    fn artifact_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<ArtifactRecord> {
        let path = self.dir.join(rel);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.written.push(path);
        Ok(ArtifactRecord {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
        })
    }

    fn artifact_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<ArtifactRecord> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
            path: self.dir.join(rel),
            source: e,
        })?;
        text.push('\n');
        self.artifact_bytes(rel, text.as_bytes())
    }

    fn artifact_via(
        &mut self,
        rel: &str,
        write: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<ArtifactRecord> {
        let path = self.dir.join(rel);
        write(&path)?;
        self.written.push(path.clone());
        Ok(ArtifactRecord {
            path: rel.to_string(),
            sha256: sha256_file(&path)?,
        })
    }

    fn finish_stage(
        &mut self,
        stage: &str,
        seed: Option<u64>,
        inputs: Vec<ArtifactRecord>,
        outputs: Vec<ArtifactRecord>,
        started: Instant,
    ) {
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            seed,
            inputs,
            outputs,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }

    fn remove_written(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
    }
}

fn external_input(path: &Path) -> Result<ArtifactRecord> {
    Ok(ArtifactRecord {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// Load a prebuilt dataset CSV, accepting either TLQual column layout.
pub fn load_dimension_dataset(path: &Path, dimension: Dimension) -> Result<Dataset> {
    let schema = FeatureSchema::for_dimension(dimension);
    match load_dataset(path, &schema, DataProvenance::Raw) {
        Err(Error::SchemaMismatch { .. }) if dimension == Dimension::TlQual => load_dataset(
            path,
            &FeatureSchema::tlqual_with_total_rttr(),
            DataProvenance::Raw,
        ),
        other => other,
    }
}

/// Resolve the raw dataset from whichever input source is configured.
/// Returns the dataset, the consumed external files, and the seed when
/// the source drew randomness.
fn acquire_data(config: &PipelineConfig) -> Result<(Dataset, Vec<ArtifactRecord>, Option<u64>)> {
    let inp = &config.inputs;
    if let Some(path) = &inp.dataset {
        let ds = load_dimension_dataset(path, config.dimension)?;
        return Ok((ds, vec![external_input(path)?], None));
    }
    if let Some(f) = &inp.fluency {
        let transcripts = load_transcripts_jsonl(&f.transcripts)?;
        let scores = load_score_table(&f.scores)?;
        let ds = build_fludel_dataset(&transcripts, &scores)?;
        let used = vec![external_input(&f.transcripts)?, external_input(&f.scores)?];
        return Ok((ds, used, None));
    }
    if let Some(f) = &inp.fidelity {
        let pairs = load_segment_pairs(&f.segments)?;
        let metrics = ingest_neural_metrics(&f.neural_metrics)?;
        let rows = build_fidelity_features(&pairs, &metrics, &ChrfParams::default())?;
        let scores = load_score_table(&f.scores)?;
        let ds = build_infocom_dataset(&rows, &scores)?;
        let used = vec![
            external_input(&f.segments)?,
            external_input(&f.neural_metrics)?,
            external_input(&f.scores)?,
        ];
        return Ok((ds, used, None));
    }
    if let Some(t) = &inp.tlqual {
        let segmentations = load_segmentations(&t.segmentations)?;
        let collocations = load_collocations(&t.collocations)?;
        let errors = load_error_annotation_corpus(&t.errors)?;
        let scores = load_score_table(&t.scores)?;
        let options = TlqualOptions {
            min_confidence: t.min_confidence,
            include_total_rttr: t.include_total_rttr,
        };
        let ds = assemble_tlqual_dataset(&segmentations, &collocations, &errors, &scores, &options)?;
        let used = vec![
            external_input(&t.segmentations)?,
            external_input(&t.collocations)?,
            external_input(&t.errors)?,
            external_input(&t.scores)?,
        ];
        return Ok((ds, used, None));
    }
    if let Some(s) = &inp.synthetic {
        let ds = generate_synthetic_corpus(config.dimension, s.n, s.seed)?;
        return Ok((ds, Vec::new(), Some(s.seed)));
    }
    Err(Error::invalid("pipeline: no input source configured"))
}

/// Histogram panels: raw scores, plus the synthetic-only and combined
/// panels when the dataset was augmented.
pub fn score_panels(raw: &Dataset, train: &Dataset) -> Vec<(String, Vec<f64>)> {
    let mut panels = vec![("raw".to_string(), raw.scores())];
    if train.provenance == DataProvenance::Augmented {
        let synthetic: Vec<f64> = train
            .samples
            .iter()
            .filter(|s| s.sample_id.starts_with("syn-"))
            .map(|s| s.score)
            .collect();
        panels.push(("synthetic".to_string(), synthetic));
        panels.push(("augmented".to_string(), train.scores()));
    }
    panels
}

/// Run every stage and return the manifest. See the module docs for
/// the artifact and failure contract.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let _lock = DirLock::acquire(&config.output_dir)?;
    let mut run = RunState {
        dir: &config.output_dir,
        written: Vec::new(),
        stages: Vec::new(),
    };
    match execute(config, &mut run) {
        Ok(manifest) => Ok(manifest),
        Err(e) => {
            run.remove_written();
            Err(e)
        }
    }
}

fn execute(config: &PipelineConfig, run: &mut RunState) -> Result<RunManifest> {
    let config_json = serde_json::to_string(config).map_err(|e| Error::Json {
        path: config.output_dir.join("config"),
        source: e,
    })?;
    let config_digest = sha256_hex(config_json.as_bytes());

    // Data: load, extract, or synthesize the raw dataset.
    let started = Instant::now();
    let (raw, data_inputs, data_seed) = acquire_data(config).map_err(|e| stage_err("data", e))?;
    let data_rec = run
        .artifact_via("data.csv", |p| save_dataset(p, &raw))
        .map_err(|e| stage_err("data", e))?;
    run.finish_stage("data", data_seed, data_inputs, vec![data_rec.clone()], started);

    // Augment: train the CVAE and top the dataset up to target_total.
    let (train_ds, train_rec) = if config.augmentation.enabled {
        let started = Instant::now();
        let aug = config.augmentation.clone();
        let augmented = train_cvae(&raw, &aug.cvae)
            .and_then(|cvae| augment_dataset(&raw, &cvae, aug.target_total, aug.seed))
            .map_err(|e| stage_err("augment", e))?;
        let rec = run
            .artifact_via("aug.csv", |p| save_dataset(p, &augmented))
            .map_err(|e| stage_err("augment", e))?;
        run.finish_stage(
            "augment",
            Some(aug.seed),
            vec![data_rec.clone()],
            vec![rec.clone()],
            started,
        );
        (augmented, rec)
    } else {
        (raw.clone(), data_rec.clone())
    };

    // Train: grid search by k-fold CV, retrain, hold out a test set.
    let started = Instant::now();
    let grid = config.model.effective_grid()?;
    let protocol = run_training_protocol(
        &train_ds,
        &grid,
        &ProtocolOptions {
            test_fraction: config.evaluation.test_fraction,
            k: config.evaluation.k_folds,
            scaler_mode: config.scaler_mode,
            seed: config.model.seed,
        },
    )
    .map_err(|e| stage_err("train", e))?;
    let model_rec = run
        .artifact_via("model.json", |p| save_model(p, &protocol.model))
        .map_err(|e| stage_err("train", e))?;
    run.finish_stage(
        "train",
        Some(config.model.seed),
        vec![train_rec.clone()],
        vec![model_rec.clone()],
        started,
    );

    // Evaluate: persist the held-out test report.
    let started = Instant::now();
    let eval_rec = run
        .artifact_json("eval.json", &protocol.report)
        .map_err(|e| stage_err("evaluate", e))?;
    run.finish_stage(
        "evaluate",
        None,
        vec![model_rec.clone(), train_rec.clone()],
        vec![eval_rec],
        started,
    );

    // Explain: global attributions (with bootstrap CIs) plus any
    // requested local reports.
    let started = Instant::now();
    let (global, locals) =
        explain_stage(config, &protocol.model, &train_ds).map_err(|e| stage_err("explain", e))?;
    let mut explain_outs = vec![run
        .artifact_json("shap-global.json", &global)
        .map_err(|e| stage_err("explain", e))?];
    for local in &locals {
        let rel = format!("shap-local-{}.json", sanitize_file_stem(&local.sample_id));
        explain_outs.push(
            run.artifact_json(&rel, local)
                .map_err(|e| stage_err("explain", e))?,
        );
    }
    run.finish_stage(
        "explain",
        Some(config.explanation.seed),
        vec![model_rec.clone(), train_rec.clone()],
        explain_outs,
        started,
    );

    // Plot: deterministic SVG renderings of the reports.
    let started = Instant::now();
    let rendered = render_plots(&global, &locals, &raw, &train_ds).map_err(|e| stage_err("plot", e))?;
    let mut plot_outs = Vec::with_capacity(rendered.len());
    for (rel, svg) in &rendered {
        plot_outs.push(
            run.artifact_bytes(rel, svg.as_bytes())
                .map_err(|e| stage_err("plot", e))?,
        );
    }
    run.finish_stage("plot", None, Vec::new(), plot_outs, started);

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest,
        dimension: config.dimension,
        data_provenance: train_ds.provenance,
        stages: run.stages.clone(),
    };
    run.artifact_json("manifest.json", &manifest)?;
    Ok(manifest)
}

fn explain_stage(
    config: &PipelineConfig,
    model: &crate::models::TrainedModel,
    train_ds: &Dataset,
) -> Result<(GlobalImportance, Vec<LocalExplanation>)> {
    let ex = &config.explanation;
    let background = BackgroundSet::from_dataset(train_ds, ex.background_cap, ex.background_seed)?;
    let options = ExplainOptions {
        method: ex.method,
        n_permutations: ex.n_permutations,
        seed: ex.seed,
    };
    let mut global = global_importance(model, train_ds, &background, &options)?;
    if ex.bootstrap_resamples > 0 {
        let ci = bootstrap_ci(
            model,
            train_ds,
            &background,
            ex.bootstrap_resamples,
            ex.bootstrap_seed,
            &options,
        )?;
        global.attach_ci(&ci)?;
    }
    let mut locals = Vec::with_capacity(ex.local_sample_ids.len());
    for id in &ex.local_sample_ids {
        let sample = train_ds
            .samples
            .iter()
            .find(|s| s.sample_id == *id)
            .ok_or_else(|| {
                Error::invalid(format!("local explanation: sample id {id:?} not in the dataset"))
            })?;
        locals.push(local_explanation(model, sample, &background, &options)?);
    }
    Ok((global, locals))
}

fn render_plots(
    global: &GlobalImportance,
    locals: &[LocalExplanation],
    raw: &Dataset,
    train_ds: &Dataset,
) -> Result<Vec<(String, String)>> {
    let mut files = vec![
        (
            "importance-bars.svg".to_string(),
            plot::render_importance_bars(global, MAX_PLOT_FEATURES)?,
        ),
        (
            "beeswarm.svg".to_string(),
            plot::render_beeswarm(global, MAX_PLOT_FEATURES)?,
        ),
        (
            "score-histograms.svg".to_string(),
            plot::render_score_histograms(&score_panels(raw, train_ds))?,
        ),
    ];
    for local in locals {
        let stem = sanitize_file_stem(&local.sample_id);
        files.push((
            format!("waterfall-{stem}.svg"),
            plot::render_waterfall(local, MAX_WATERFALL_BARS)?,
        ));
        files.push((format!("force-{stem}.svg"), plot::render_force(local)?));
    }
    Ok(files)
}
