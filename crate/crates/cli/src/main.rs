//! `interpqa` command line interface.
//!
//! Every subcommand is a thin wrapper over the library: it parses flags,
//! loads the referenced files, calls one or two library functions, and
//! writes the result. Operational failures print a single line to stderr,
//! `interpqa: error: <code>: <message>`, and exit nonzero; the code token
//! is stable so scripts can branch on it. `NO_COLOR` disables clap's
//! styled help and usage output; normal output never uses color.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use interpqa::audio::{detect_silences, read_wav_mono, SilenceParams};
use interpqa::augment::{augment_dataset, save_cvae, train_cvae, CvaeConfig};
use interpqa::data::{
    descriptive_stats, load_dataset, load_score_table, save_dataset, DataProvenance, Dataset,
    Dimension, Moments, ScalerMode,
};
use interpqa::eval::{evaluate, EvalProvenance, EvalReport, MannWhitneyMethod};
use interpqa::explain::{
    bootstrap_ci, global_importance, local_explanation, BackgroundSet, ExplainOptions,
    GlobalImportance, LocalExplanation, ShapMethod, DEFAULT_BOOTSTRAP_RESAMPLES,
    DEFAULT_PERMUTATIONS,
};
use interpqa::fidelity::{
    build_fidelity_features, build_infocom_dataset, ingest_neural_metrics, load_segment_pairs,
    ChrfParams,
};
use interpqa::fluency::{build_fludel_dataset, load_transcripts_jsonl};
use interpqa::models::{
    load_model, run_training_protocol, save_model, ModelKind, ProtocolOptions, TrainedModel,
};
use interpqa::pipeline::{
    load_dimension_dataset, run_pipeline, score_panels, ModelConfig, PipelineConfig,
    MAX_PLOT_FEATURES, MAX_WATERFALL_BARS,
};
use interpqa::plot::{
    render_beeswarm, render_force, render_importance_bars, render_score_histograms,
    render_waterfall,
};
use interpqa::synth::{generate_with_profile, ScoreProfile};
use interpqa::tlqual::{
    assemble_tlqual_dataset, load_collocations, load_error_annotation_corpus, load_segmentations,
    TlqualOptions,
};
use interpqa::{Error, Result};

/// Print one line to stdout. A closed pipe (`interpqa ... | head`) ends
/// the process quietly instead of panicking; other write failures are
/// real errors.
macro_rules! say {
    ($($arg:tt)*) => { emit(format_args!($($arg)*)) };
}

fn emit(args: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let result = out.write_fmt(args).and_then(|()| out.write_all(b"\n"));
    if let Err(e) = result {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("interpqa: error: io: stdout: {e}");
        std::process::exit(1);
    }
}

#[derive(Parser)]
#[command(
    name = "interpqa",
    version,
    about = "Interpreting-quality assessment: feature extraction, augmentation, \
             regression, evaluation, and Shapley explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-column descriptive statistics for a dataset CSV
    Stats(StatsArgs),
    /// Build the FluDel dataset from time-aligned transcripts
    ExtractFluency(ExtractFluencyArgs),
    /// Build the InfoCom dataset from segment pairs and neural metrics
    ExtractFidelity(ExtractFidelityArgs),
    /// Build the TLQual dataset from the three annotation files
    ExtractTlqual(ExtractTlqualArgs),
    /// Train a conditional VAE and append generated rows to a raw dataset
    Augment(AugmentArgs),
    /// Grid-search, train, and evaluate a regressor on one dataset
    Train(TrainArgs),
    /// Score a trained model against a labeled test set
    Evaluate(EvaluateArgs),
    /// Shapley attributions for a whole dataset or a single sample
    #[command(subcommand)]
    Explain(ExplainCommand),
    /// Render a stored report or dataset to a deterministic SVG
    #[command(subcommand)]
    Plot(PlotCommand),
    /// Run the config-driven end-to-end pipeline
    Pipeline(PipelineArgs),
    /// Generate a synthetic scored corpus for tests and demos
    Synth(SynthArgs),
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset CSV to describe
    #[arg(long)]
    data: PathBuf,
    /// InfoCom, FluDel, or TLQual
    #[arg(long, value_parser = parse_dimension)]
    dimension: Dimension,
    /// Emit a JSON array instead of the text table
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, PartialEq)]
enum SilenceSource {
    Transcript,
    FromAudio,
}

#[derive(Args)]
struct ExtractFluencyArgs {
    /// Time-aligned transcripts, one JSON object per line
    #[arg(long)]
    transcripts: PathBuf,
    /// sample_id,score CSV
    #[arg(long)]
    scores: PathBuf,
    /// Silence source: "transcript" keeps the annotated intervals,
    /// "from-audio" recomputes them from per-sample WAV files
    #[arg(long, default_value = "transcript", value_parser = parse_silence_source)]
    silences: SilenceSource,
    /// Directory of <sample_id>.wav files; required with --silences from-audio
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    /// Output dataset CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractFidelityArgs {
    /// Source/target segment pairs, one JSON object per line
    #[arg(long)]
    segments: PathBuf,
    /// Per-sample neural metric CSV (BLEURT20, BERTScore, CometKiwi, xCOMET)
    #[arg(long)]
    neural_metrics: PathBuf,
    /// sample_id,score CSV
    #[arg(long)]
    scores: PathBuf,
    /// Highest character n-gram order for chrF
    #[arg(long, default_value_t = 6)]
    max_n: usize,
    /// chrF recall weight beta
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Output dataset CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractTlqualArgs {
    /// Segmentation annotations, one JSON object per line
    #[arg(long)]
    segmentations: PathBuf,
    /// Collocation annotations, one JSON object per line
    #[arg(long)]
    collocations: PathBuf,
    /// Error annotations, one JSON object per line
    #[arg(long)]
    errors: PathBuf,
    /// sample_id,score CSV
    #[arg(long)]
    scores: PathBuf,
    /// Drop error entries below this confidence
    #[arg(long, default_value_t = 0.0)]
    min_confidence: f64,
    /// Append the pooled TOTAL_RTTR column
    #[arg(long)]
    include_total_rttr: bool,
    /// Output dataset CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    /// InfoCom, FluDel, or TLQual
    #[arg(long, value_parser = parse_dimension)]
    dimension: Dimension,
    /// Raw dataset CSV to augment
    #[arg(long)]
    raw: PathBuf,
    /// Row count after appending generated samples
    #[arg(long, default_value_t = 500)]
    target_total: usize,
    /// Conditional-generation seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output augmented CSV
    #[arg(long)]
    out: PathBuf,
    /// Also persist the trained generator as JSON
    #[arg(long)]
    model_out: Option<PathBuf>,
    /// Latent dimensionality
    #[arg(long, default_value_t = 8)]
    latent_dim: usize,
    /// Encoder/decoder hidden widths, comma separated
    #[arg(long, value_delimiter = ',', default_values_t = [32usize])]
    hidden: Vec<usize>,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    /// Training epochs
    #[arg(long, default_value_t = 2000)]
    epochs: usize,
    /// Minibatch size; the default trains full-batch
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight on the KL term
    #[arg(long, default_value_t = 1.0)]
    kl_weight: f64,
    /// Generator training seed
    #[arg(long, default_value_t = 0)]
    cvae_seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// InfoCom, FluDel, or TLQual
    #[arg(long, value_parser = parse_dimension)]
    dimension: Dimension,
    /// gbt, rf, or mlp
    #[arg(long, value_parser = parse_kind)]
    model: ModelKind,
    /// Training dataset CSV
    #[arg(long)]
    data: PathBuf,
    /// JSON array of candidate configurations; defaults to the built-in grid
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Protocol seed (split, search, and final fit derive from it)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Held-out fraction for the test split
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Cross-validation fold count
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    /// fit-on-train or fit-on-all
    #[arg(long, default_value = "fit-on-train", value_parser = parse_scaler)]
    scaler_mode: ScalerMode,
    /// Provenance label recorded in the report; inferred from the
    /// sample ids when omitted
    #[arg(long, value_parser = parse_provenance)]
    provenance: Option<DataProvenance>,
    /// Output model JSON
    #[arg(long)]
    out: PathBuf,
    /// Also write the held-out evaluation report JSON
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained model JSON
    #[arg(long)]
    model: PathBuf,
    /// Labeled test dataset CSV
    #[arg(long)]
    test: PathBuf,
    /// Provenance label recorded in the report; inferred from the
    /// sample ids when omitted
    #[arg(long, value_parser = parse_provenance)]
    provenance: Option<DataProvenance>,
    /// Scaler-mode label recorded in the report's provenance block
    #[arg(long, default_value = "fit-on-train", value_parser = parse_scaler)]
    scaler_mode: ScalerMode,
    /// Output report JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExplainCommon {
    /// Trained model JSON
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV with the rows to explain
    #[arg(long)]
    data: PathBuf,
    /// Background dataset CSV; defaults to --data
    #[arg(long)]
    background: Option<PathBuf>,
    /// Subsample the background down to this many rows
    #[arg(long)]
    background_cap: Option<usize>,
    /// Seed for the background subsample
    #[arg(long, default_value_t = 0)]
    background_seed: u64,
    /// exact, tree, or sampled; the default picks per model
    #[arg(long, value_parser = parse_method)]
    method: Option<ShapMethod>,
    /// Permutations drawn by the sampled method
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Seed for the sampled method
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output report JSON
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ExplainCommand {
    /// Mean-|phi| feature ranking with optional bootstrap intervals
    Global {
        #[command(flatten)]
        common: ExplainCommon,
        /// Bootstrap resample count for the intervals; 0 disables them
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP_RESAMPLES)]
        bootstrap: usize,
        /// Seed for the bootstrap resamples
        #[arg(long, default_value_t = 0)]
        bootstrap_seed: u64,
    },
    /// One sample's contribution breakdown
    Local {
        #[command(flatten)]
        common: ExplainCommon,
        /// Row to explain, by sample id
        #[arg(long)]
        sample_id: String,
    },
}

#[derive(Subcommand)]
enum PlotCommand {
    /// Mean-|phi| bar chart with interval whiskers
    Bar {
        /// Global explanation report JSON
        #[arg(long)]
        report: PathBuf,
        /// Show at most this many features
        #[arg(long, default_value_t = MAX_PLOT_FEATURES)]
        max_features: usize,
        /// Output SVG
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-sample attribution spread, colored by feature value
    Beeswarm {
        /// Global explanation report JSON
        #[arg(long)]
        report: PathBuf,
        /// Show at most this many features
        #[arg(long, default_value_t = MAX_PLOT_FEATURES)]
        max_features: usize,
        /// Output SVG
        #[arg(long)]
        out: PathBuf,
    },
    /// Signed contribution walk from base value to prediction
    Waterfall {
        /// Local explanation report JSON
        #[arg(long)]
        report: PathBuf,
        /// Bar budget including the aggregate remainder bar
        #[arg(long, default_value_t = MAX_WATERFALL_BARS)]
        max_bars: usize,
        /// Output SVG
        #[arg(long)]
        out: PathBuf,
    },
    /// Additive force layout for one prediction
    Force {
        /// Local explanation report JSON
        #[arg(long)]
        report: PathBuf,
        /// Output SVG
        #[arg(long)]
        out: PathBuf,
    },
    /// Score histograms for raw, synthetic, and augmented rows
    Histograms {
        /// InfoCom, FluDel, or TLQual
        #[arg(long, value_parser = parse_dimension)]
        dimension: Dimension,
        /// Raw dataset CSV
        #[arg(long)]
        raw: PathBuf,
        /// Augmented dataset CSV; adds the synthetic and combined panels
        #[arg(long)]
        augmented: Option<PathBuf>,
        /// Output SVG
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PipelineArgs {
    /// Pipeline configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Skip augmentation and train on the raw rows
    #[arg(long)]
    no_augment: bool,
    /// Override augmentation.target_total
    #[arg(long)]
    target_total: Option<usize>,
    /// Override model.kind; a configured grid of another kind is dropped
    #[arg(long, value_parser = parse_kind)]
    model: Option<ModelKind>,
    /// Override model.seed
    #[arg(long)]
    model_seed: Option<u64>,
    /// Override explanation.bootstrap_resamples
    #[arg(long)]
    bootstrap: Option<usize>,
}

#[derive(Clone, Copy, PartialEq)]
enum ProfileKind {
    Signal,
    Gaussian,
}

#[derive(Args)]
struct SynthArgs {
    /// InfoCom, FluDel, or TLQual
    #[arg(long, value_parser = parse_dimension)]
    dimension: Dimension,
    /// Row count (at least 10)
    #[arg(long, default_value_t = 117)]
    n: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score profile: "signal" (monotone ground truth) or "gaussian"
    #[arg(long, default_value = "signal", value_parser = parse_profile)]
    score_profile: ProfileKind,
    /// Gaussian profile mean
    #[arg(long, default_value_t = 5.0)]
    score_mean: f64,
    /// Gaussian profile standard deviation
    #[arg(long, default_value_t = 0.8)]
    score_sd: f64,
    /// Output dataset CSV
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    env_logger::init();
    let cli = parse_cli();
    if let Err(e) = run(cli) {
        eprintln!("interpqa: error: {}: {e}", e.code());
        std::process::exit(1);
    }
}

/// Parse arguments, honoring `NO_COLOR` for clap's own output.
fn parse_cli() -> Cli {
    let mut cmd = Cli::command();
    if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        cmd = cmd.color(clap::ColorChoice::Never);
    }
    let matches = cmd.clone().get_matches();
    match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.format(&mut cmd).exit(),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Stats(a) => run_stats(a),
        Command::ExtractFluency(a) => run_extract_fluency(a),
        Command::ExtractFidelity(a) => run_extract_fidelity(a),
        Command::ExtractTlqual(a) => run_extract_tlqual(a),
        Command::Augment(a) => run_augment(a),
        Command::Train(a) => run_train(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Explain(c) => run_explain(c),
        Command::Plot(c) => run_plot(c),
        Command::Pipeline(a) => run_pipeline_cmd(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn run_stats(a: StatsArgs) -> Result<()> {
    let ds = load_dimension_dataset(&a.data, a.dimension)?;
    let mut rows: Vec<(String, Moments)> = Vec::with_capacity(ds.schema.len() + 1);
    for (j, spec) in ds.schema.features.iter().enumerate() {
        rows.push((spec.name.clone(), descriptive_stats(&ds.feature_column(j))?));
    }
    rows.push(("score".to_string(), descriptive_stats(&ds.scores())?));
    if a.json {
        let items: Vec<serde_json::Value> = rows
            .iter()
            .map(|(name, m)| {
                let mut v = serde_json::to_value(m).expect("moments serialize");
                v.as_object_mut()
                    .expect("moments are an object")
                    .insert("column".to_string(), serde_json::json!(name));
                v
            })
            .collect();
        say!(
            "{}",
            serde_json::to_string_pretty(&items).expect("stats serialize")
        );
        return Ok(());
    }
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(6).max(6);
    say!(
        "{:<width$} {:>6} {:>12} {:>12} {:>12} {:>12}",
        "column", "n", "mean", "sd", "skewness", "ex-kurtosis"
    );
    for (name, m) in &rows {
        say!(
            "{:<width$} {:>6} {:>12.4} {:>12} {:>12} {:>12}",
            name,
            m.n,
            m.mean,
            fmt_opt(m.sd),
            fmt_opt(m.skewness),
            fmt_opt(m.excess_kurtosis)
        );
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.4}"),
        None => "-".to_string(),
    }
}

fn run_extract_fluency(a: ExtractFluencyArgs) -> Result<()> {
    let mut transcripts = load_transcripts_jsonl(&a.transcripts)?;
    if a.silences == SilenceSource::FromAudio {
        let dir = a.audio_dir.as_ref().ok_or_else(|| {
            Error::InvalidInput("--silences from-audio requires --audio-dir".to_string())
        })?;
        for t in &mut transcripts {
            let wav = dir.join(format!("{}.wav", t.sample_id));
            let (samples, rate) = read_wav_mono(&wav)?;
            t.silences = detect_silences(&samples, rate, &SilenceParams::default())?;
        }
    } else if a.audio_dir.is_some() {
        return Err(Error::InvalidInput(
            "--audio-dir only applies with --silences from-audio".to_string(),
        ));
    }
    let scores = load_score_table(&a.scores)?;
    let ds = build_fludel_dataset(&transcripts, &scores)?;
    save_dataset(&a.out, &ds)?;
    print_wrote_dataset(&a.out, &ds);
    Ok(())
}

fn run_extract_fidelity(a: ExtractFidelityArgs) -> Result<()> {
    let pairs = load_segment_pairs(&a.segments)?;
    let metrics = ingest_neural_metrics(&a.neural_metrics)?;
    let params = ChrfParams {
        max_n: a.max_n,
        beta: a.beta,
    };
    let rows = build_fidelity_features(&pairs, &metrics, &params)?;
    let scores = load_score_table(&a.scores)?;
    let ds = build_infocom_dataset(&rows, &scores)?;
    save_dataset(&a.out, &ds)?;
    print_wrote_dataset(&a.out, &ds);
    Ok(())
}

fn run_extract_tlqual(a: ExtractTlqualArgs) -> Result<()> {
    let segmentations = load_segmentations(&a.segmentations)?;
    let collocations = load_collocations(&a.collocations)?;
    let errors = load_error_annotation_corpus(&a.errors)?;
    let scores = load_score_table(&a.scores)?;
    let options = TlqualOptions {
        min_confidence: a.min_confidence,
        include_total_rttr: a.include_total_rttr,
    };
    let ds = assemble_tlqual_dataset(&segmentations, &collocations, &errors, &scores, &options)?;
    save_dataset(&a.out, &ds)?;
    print_wrote_dataset(&a.out, &ds);
    Ok(())
}

fn run_augment(a: AugmentArgs) -> Result<()> {
    let raw = load_dimension_dataset(&a.raw, a.dimension)?;
    let config = CvaeConfig {
        latent_dim: a.latent_dim,
        hidden_widths: a.hidden.clone(),
        learning_rate: a.learning_rate,
        epochs: a.epochs,
        batch_size: a.batch_size,
        kl_weight: a.kl_weight,
        seed: a.cvae_seed,
    };
    let cvae = train_cvae(&raw, &config)?;
    let augmented = augment_dataset(&raw, &cvae, a.target_total, a.seed)?;
    save_dataset(&a.out, &augmented)?;
    print_wrote_dataset(&a.out, &augmented);
    if let Some(path) = &a.model_out {
        save_cvae(path, &cvae)?;
        say!("wrote {}", path.display());
    }
    Ok(())
}

fn run_train(a: TrainArgs) -> Result<()> {
    let mut ds = load_dimension_dataset(&a.data, a.dimension)?;
    ds.provenance = a.provenance.unwrap_or_else(|| infer_provenance(&ds));
    let grid = match &a.grid {
        None => ModelConfig {
            kind: a.model,
            grid: None,
            seed: a.seed,
        }
        .effective_grid()?,
        Some(path) => ModelConfig {
            kind: a.model,
            grid: Some(read_json(path)?),
            seed: a.seed,
        }
        .effective_grid()?,
    };
    let options = ProtocolOptions {
        test_fraction: a.test_fraction,
        k: a.k_folds,
        scaler_mode: a.scaler_mode,
        seed: a.seed,
    };
    let result = run_training_protocol(&ds, &grid, &options)?;
    let selected = result.search.selected_params();
    say!(
        "selected: {}",
        serde_json::to_string(selected).expect("params serialize")
    );
    say!(
        "cv rmse: {:.4} (best of {} candidates, k = {})",
        result.search.evaluations[result.search.selected].mean_rmse,
        result.search.evaluations.len(),
        result.search.k
    );
    print_report(&result.report);
    save_model(&a.out, &result.model)?;
    say!("wrote {}", a.out.display());
    if let Some(path) = &a.report {
        write_json(path, &result.report)?;
        say!("wrote {}", path.display());
    }
    Ok(())
}

fn run_evaluate(a: EvaluateArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mut ds = load_dataset(&a.test, &model.schema, DataProvenance::Raw)?;
    ds.provenance = a.provenance.unwrap_or_else(|| infer_provenance(&ds));
    let pred: Vec<f64> = ds
        .samples
        .iter()
        .map(|s| model.predict(&s.features))
        .collect::<Result<_>>()?;
    let provenance = EvalProvenance {
        data: ds.provenance,
        seed: model.seed,
        scaler_mode: a.scaler_mode,
        model: Some(model.kind().name().to_string()),
    };
    let report = evaluate(&pred, &ds.scores(), provenance)?;
    print_report(&report);
    write_json(&a.out, &report)?;
    say!("wrote {}", a.out.display());
    Ok(())
}

/// Load the model, the rows to explain, and the background set shared by
/// both explain subcommands.
fn explain_setup(
    common: &ExplainCommon,
) -> Result<(TrainedModel, Dataset, BackgroundSet, ExplainOptions)> {
    let model = load_model(&common.model)?;
    let ds = load_dataset(&common.data, &model.schema, DataProvenance::Raw)?;
    let background = match &common.background {
        Some(path) => {
            let bg = load_dataset(path, &model.schema, DataProvenance::Raw)?;
            BackgroundSet::from_dataset(&bg, common.background_cap, common.background_seed)?
        }
        None => BackgroundSet::from_dataset(&ds, common.background_cap, common.background_seed)?,
    };
    let options = ExplainOptions {
        method: common.method,
        n_permutations: common.permutations,
        seed: common.seed,
    };
    Ok((model, ds, background, options))
}

fn run_explain(cmd: ExplainCommand) -> Result<()> {
    match cmd {
        ExplainCommand::Global {
            common,
            bootstrap,
            bootstrap_seed,
        } => {
            let (model, ds, background, options) = explain_setup(&common)?;
            let mut global = global_importance(&model, &ds, &background, &options)?;
            if bootstrap > 0 {
                let ci = bootstrap_ci(&model, &ds, &background, bootstrap, bootstrap_seed, &options)?;
                global.attach_ci(&ci)?;
            }
            write_json(&common.out, &global)?;
            say!(
                "wrote {} ({}, {} samples, {} features)",
                common.out.display(),
                global.method,
                global.sample_ids.len(),
                global.feature_order.len()
            );
        }
        ExplainCommand::Local { common, sample_id } => {
            let (model, ds, background, options) = explain_setup(&common)?;
            let sample = ds
                .samples
                .iter()
                .find(|s| s.sample_id == sample_id)
                .ok_or_else(|| Error::MissingIds {
                    ids: vec![sample_id.clone()],
                })?;
            let local = local_explanation(&model, sample, &background, &options)?;
            write_json(&common.out, &local)?;
            say!(
                "wrote {} ({}, sample {})",
                common.out.display(),
                local.method,
                local.sample_id
            );
        }
    }
    Ok(())
}

fn run_plot(cmd: PlotCommand) -> Result<()> {
    let (out, svg) = match cmd {
        PlotCommand::Bar {
            report,
            max_features,
            out,
        } => {
            let global: GlobalImportance = read_json(&report)?;
            (out, render_importance_bars(&global, max_features)?)
        }
        PlotCommand::Beeswarm {
            report,
            max_features,
            out,
        } => {
            let global: GlobalImportance = read_json(&report)?;
            (out, render_beeswarm(&global, max_features)?)
        }
        PlotCommand::Waterfall {
            report,
            max_bars,
            out,
        } => {
            let local: LocalExplanation = read_json(&report)?;
            (out, render_waterfall(&local, max_bars)?)
        }
        PlotCommand::Force { report, out } => {
            let local: LocalExplanation = read_json(&report)?;
            (out, render_force(&local)?)
        }
        PlotCommand::Histograms {
            dimension,
            raw,
            augmented,
            out,
        } => {
            let raw_ds = load_dimension_dataset(&raw, dimension)?;
            let panels = match &augmented {
                Some(path) => {
                    let mut aug = load_dimension_dataset(path, dimension)?;
                    aug.provenance = DataProvenance::Augmented;
                    score_panels(&raw_ds, &aug)
                }
                None => score_panels(&raw_ds, &raw_ds),
            };
            (out, render_score_histograms(&panels)?)
        }
    };
    fs::write(&out, svg).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    say!("wrote {}", out.display());
    Ok(())
}

fn run_pipeline_cmd(a: PipelineArgs) -> Result<()> {
    let mut config: PipelineConfig = read_json(&a.config)?;
    if let Some(dir) = a.output_dir {
        config.output_dir = dir;
    }
    if a.no_augment {
        config.augmentation.enabled = false;
    }
    if let Some(total) = a.target_total {
        config.augmentation.target_total = total;
    }
    if let Some(kind) = a.model {
        if kind != config.model.kind {
            config.model.grid = None;
        }
        config.model.kind = kind;
    }
    if let Some(seed) = a.model_seed {
        config.model.seed = seed;
    }
    if let Some(n) = a.bootstrap {
        config.explanation.bootstrap_resamples = n;
    }
    let manifest = run_pipeline(&config)?;
    for stage in &manifest.stages {
        say!(
            "{}: {} artifact(s), {} ms",
            stage.stage,
            stage.outputs.len(),
            stage.wall_ms
        );
    }
    say!("manifest: {}", config.output_dir.join("manifest.json").display());
    Ok(())
}

fn run_synth(a: SynthArgs) -> Result<()> {
    let profile = match a.score_profile {
        ProfileKind::Signal => ScoreProfile::Signal,
        ProfileKind::Gaussian => ScoreProfile::Gaussian {
            mean: a.score_mean,
            sd: a.score_sd,
        },
    };
    let ds = generate_with_profile(a.dimension, a.n, a.seed, profile)?;
    save_dataset(&a.out, &ds)?;
    print_wrote_dataset(&a.out, &ds);
    Ok(())
}

/// Rows generated by the augmenter carry the reserved `syn-` prefix, so
/// their presence marks a dataset as augmented.
fn infer_provenance(ds: &Dataset) -> DataProvenance {
    if ds.samples.iter().any(|s| s.sample_id.starts_with("syn-")) {
        DataProvenance::Augmented
    } else {
        DataProvenance::Raw
    }
}

fn print_wrote_dataset(path: &Path, ds: &Dataset) {
    say!(
        "wrote {} ({} rows, {} features)",
        path.display(),
        ds.len(),
        ds.schema.len()
    );
}

fn print_report(report: &EvalReport) {
    let spearman = match (report.spearman_rho, report.spearman_p) {
        (Some(rho), Some(p)) => format!("spearman {rho:.4} (p {p:.4})"),
        _ => "spearman undefined".to_string(),
    };
    let method = match report.mann_whitney_method {
        MannWhitneyMethod::Exact => "exact",
        MannWhitneyMethod::NormalApprox => "normal-approx",
    };
    say!(
        "test: n {}  rmse {:.4}  mae {:.4}  {}  mw-u {:.1} (p {:.4}, {})  ear {:.4}  aar {:.4}",
        report.n,
        report.rmse,
        report.mae,
        spearman,
        report.mann_whitney_u,
        report.mann_whitney_p,
        method,
        report.ear,
        report.aar
    );
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_dimension(s: &str) -> std::result::Result<Dimension, String> {
    match s.to_ascii_lowercase().as_str() {
        "infocom" => Ok(Dimension::InfoCom),
        "fludel" => Ok(Dimension::FluDel),
        "tlqual" => Ok(Dimension::TlQual),
        _ => Err(format!(
            "unknown dimension {s:?} (expected InfoCom, FluDel, or TLQual)"
        )),
    }
}

fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "gbt" => Ok(ModelKind::Gbt),
        "rf" => Ok(ModelKind::Rf),
        "mlp" => Ok(ModelKind::Mlp),
        _ => Err(format!("unknown model kind {s:?} (expected gbt, rf, or mlp)")),
    }
}

fn parse_scaler(s: &str) -> std::result::Result<ScalerMode, String> {
    match s {
        "fit-on-train" => Ok(ScalerMode::FitOnTrain),
        "fit-on-all" => Ok(ScalerMode::FitOnAll),
        _ => Err(format!(
            "unknown scaler mode {s:?} (expected fit-on-train or fit-on-all)"
        )),
    }
}

fn parse_method(s: &str) -> std::result::Result<ShapMethod, String> {
    match s {
        "exact" => Ok(ShapMethod::Exact),
        "tree" => Ok(ShapMethod::Tree),
        "sampled" => Ok(ShapMethod::Sampled),
        _ => Err(format!(
            "unknown method {s:?} (expected exact, tree, or sampled)"
        )),
    }
}

fn parse_provenance(s: &str) -> std::result::Result<DataProvenance, String> {
    match s {
        "raw" => Ok(DataProvenance::Raw),
        "synthetic" => Ok(DataProvenance::Synthetic),
        "augmented" => Ok(DataProvenance::Augmented),
        _ => Err(format!(
            "unknown provenance {s:?} (expected raw, synthetic, or augmented)"
        )),
    }
}

fn parse_silence_source(s: &str) -> std::result::Result<SilenceSource, String> {
    match s {
        "transcript" => Ok(SilenceSource::Transcript),
        "from-audio" => Ok(SilenceSource::FromAudio),
        _ => Err(format!(
            "unknown silence source {s:?} (expected transcript or from-audio)"
        )),
    }
}

fn parse_profile(s: &str) -> std::result::Result<ProfileKind, String> {
    match s {
        "signal" => Ok(ProfileKind::Signal),
        "gaussian" => Ok(ProfileKind::Gaussian),
        _ => Err(format!(
            "unknown score profile {s:?} (expected signal or gaussian)"
        )),
    }
}
