//! Command-line front end for the `nc_coreset` library.
//!
//! Every subcommand reads its inputs from files, writes its artifacts under
//! `--out` and embeds the resolved configuration in each JSON report. Errors
//! are reported as one JSON line on stderr and a kind-specific exit code.

pub mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use nc_coreset::collapse::{self, ClassGeometry, DEFAULT_DECISION_THRESHOLD};
use nc_coreset::embedding_io::{
    load_table, read_manifest, read_score_table, store_table, write_manifest, write_score_table, EmbeddingRecord,
};
use nc_coreset::eval_metrics::{evaluate, Metrics};
use nc_coreset::features;
use nc_coreset::kmeans::{KCandidate, KSelection, OverlapReport};
use nc_coreset::sampler::{self, OverlapMode, SamplingRule};
use nc_coreset::toy_model::{self, LinearModel, SyntheticConfig};
use nc_coreset::{EmbeddingTable, Error, Label, SelectionManifest};

pub use config::{Config, Flags};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const GEOMETRY_FILE: &str = "geometry.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const PROJECTION_FILE: &str = "projection.csv";
pub const MODEL_FILE: &str = "model.json";
pub const FULL_MODEL_FILE: &str = "model_full.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.nceb";
pub const HELDOUT_FILE: &str = "heldout.nceb";
pub const FEATURES_FILE: &str = "features.nceb";
pub const INTEREST_FILE: &str = "interest.nceb";
pub const INTEREST_REPORT_FILE: &str = "interest.json";
pub const SCORES_FILE: &str = "scores.csv";
pub const CLUSTERS_FILE: &str = "clusters.json";
pub const SYNTH_REPORT_FILE: &str = "synth.json";

pub const DEFAULT_EPOCHS: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
}

/// Exit codes, one per error kind. Listed in `--help`.
pub const EXIT_CODES: &[(&str, i32)] = &[
    ("Usage", 2),
    ("InvalidConfig", 2),
    ("IoFailure", 3),
    ("BadMagic", 4),
    ("VersionMismatch", 5),
    ("TruncatedFile", 6),
    ("TrailingBytes", 7),
    ("DimensionMismatch", 8),
    ("NonFiniteValue", 9),
    ("DuplicateSampleId", 10),
    ("InvariantViolation", 11),
    ("MalformedRow", 12),
    ("UnknownLabelToken", 13),
    ("EmptyClass", 14),
    ("DegenerateGeometry", 15),
    ("MissingScore", 16),
    ("KTooLarge", 17),
    ("EmptyInput", 18),
    ("SingleCluster", 19),
    ("EmptyCluster", 20),
    ("CountExceedsClass", 21),
    ("SingleClassOnly", 22),
    ("UnsupportedFormat", 23),
    ("CorruptFile", 24),
    ("EmptyClip", 25),
    ("ClipTooShort", 26),
    ("NegativePower", 27),
    ("ShapeMismatch", 28),
    ("DivergenceDetected", 29),
];

const EXIT_HELP: &str = "\
Exit codes:
   0  success
   2  Usage, InvalidConfig
   3  IoFailure
   4  BadMagic            5  VersionMismatch     6  TruncatedFile
   7  TrailingBytes       8  DimensionMismatch   9  NonFiniteValue
  10  DuplicateSampleId  11  InvariantViolation  12  MalformedRow
  13  UnknownLabelToken  14  EmptyClass          15  DegenerateGeometry
  16  MissingScore       17  KTooLarge           18  EmptyInput
  19  SingleCluster      20  EmptyCluster        21  CountExceedsClass
  22  SingleClassOnly    23  UnsupportedFormat   24  CorruptFile
  25  EmptyClip          26  ClipTooShort        27  NegativePower
  28  ShapeMismatch      29  DivergenceDetected
On failure one JSON line {\"error\",\"code\",\"message\"} is written to stderr.
The seed falls back to $NC_CORESET_SEED, then 0.";

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "Usage",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        let kind = self.kind();
        EXIT_CODES
            .iter()
            .find(|(k, _)| *k == kind)
            .map_or(1, |(_, code)| *code)
    }

    /// The machine-readable stderr line.
    pub fn json_line(&self) -> String {
        #[derive(Serialize)]
        struct Line<'a> {
            error: &'a str,
            code: i32,
            message: String,
        }
        serde_json::to_string(&Line {
            error: self.kind(),
            code: self.exit_code(),
            message: self.to_string(),
        })
        .expect("error line serializes")
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "nc-coreset", version, about = "Class-mean coreset sampling for real/fake embedding tables", after_help = EXIT_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Log-mel features from a `path,label,algorithm_id` audio manifest -> features.nceb
    ExtractFeatures(Flags),
    /// Synthetic Gaussian embedding table -> embeddings.nceb
    Synth(Flags),
    /// Keep correctly classified samples (--input, --scores) -> interest.nceb
    Interest(Flags),
    /// Class geometry and 2-D PCA projection -> geometry.json, projection.csv
    Geometry(Flags),
    /// Distance-to-class-mean selection (class from --class, default real) -> manifest.csv
    SampleReal(Flags),
    /// Cluster-wise selection of the fake class -> manifest.csv, clusters.json
    SampleFake(Flags),
    /// --value samples per class drawn uniformly -> manifest.csv
    SampleRandom(Flags),
    /// Union of several manifests (--input repeated) -> manifest.csv
    Merge(Flags),
    /// Logistic model on a table or manifest subset -> model.json, scores.csv
    TrainToy(Flags),
    /// EER, mAP and AUC of a score file -> metrics.json
    Eval(Flags),
    /// train, filter, sample, merge, retrain and evaluate -> metrics.json and intermediates
    Pipeline(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::ExtractFeatures(_) => "extract-features",
            Command::Synth(_) => "synth",
            Command::Interest(_) => "interest",
            Command::Geometry(_) => "geometry",
            Command::SampleReal(_) => "sample-real",
            Command::SampleFake(_) => "sample-fake",
            Command::SampleRandom(_) => "sample-random",
            Command::Merge(_) => "merge",
            Command::TrainToy(_) => "train-toy",
            Command::Eval(_) => "eval",
            Command::Pipeline(_) => "pipeline",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::ExtractFeatures(f)
            | Command::Synth(f)
            | Command::Interest(f)
            | Command::Geometry(f)
            | Command::SampleReal(f)
            | Command::SampleFake(f)
            | Command::SampleRandom(f)
            | Command::Merge(f)
            | Command::TrainToy(f)
            | Command::Eval(f)
            | Command::Pipeline(f) => f,
        }
    }
}

/// Parses arguments, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.json_line());
            e.exit_code()
        }
    }
}

pub fn run(command: &Command) -> CliResult<()> {
    let mut cfg = Config::resolve(command.flags())?;
    cfg.set("command", command.name());
    match command {
        Command::ExtractFeatures(_) => cmd_extract_features(cfg),
        Command::Synth(_) => cmd_synth(cfg),
        Command::Interest(_) => cmd_interest(cfg),
        Command::Geometry(_) => cmd_geometry(cfg),
        Command::SampleReal(_) => cmd_sample_real(cfg),
        Command::SampleFake(_) => cmd_sample_fake(cfg),
        Command::SampleRandom(_) => cmd_sample_random(cfg),
        Command::Merge(_) => cmd_merge(cfg),
        Command::TrainToy(_) => cmd_train_toy(cfg),
        Command::Eval(_) => cmd_eval(cfg),
        Command::Pipeline(_) => cmd_pipeline(cfg).map(|_| ()),
    }
}

fn out_dir(cfg: &Config) -> CliResult<PathBuf> {
    let dir = cfg.path("out")?;
    fs::create_dir_all(&dir).map_err(Error::from)?;
    Ok(dir)
}

fn input(cfg: &Config) -> CliResult<PathBuf> {
    let paths = cfg.paths("input")?;
    match paths.as_slice() {
        [one] => Ok(one.clone()),
        _ => Err(CliError::Usage(format!("expected one --input, got {}", paths.len()))),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a BTreeMap<String, String>,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(path: &Path, cfg: &Config, body: T) -> CliResult<()> {
    write_json(
        path,
        &Report {
            config: cfg.values(),
            body,
        },
    )
}

pub fn parse_rule(kind: &str, value: &str) -> CliResult<SamplingRule> {
    let bad = || CliError::Usage(format!("invalid value `{value}` for rule `{kind}`"));
    let rule = match kind {
        "threshold" => SamplingRule::Threshold(value.parse().map_err(|_| bad())?),
        "top-fraction" => SamplingRule::TopFraction(value.parse().map_err(|_| bad())?),
        "top-count" => SamplingRule::TopCount(value.parse().map_err(|_| bad())?),
        other => {
            return Err(CliError::Usage(format!(
                "unknown rule `{other}` (expected threshold, top-fraction or top-count)"
            )))
        }
    };
    Ok(rule.validate()?)
}

/// Rule from `<rule_key>`/`<value_key>`, falling back to the given defaults.
fn rule_from(cfg: &mut Config, rule_key: &str, value_key: &str, default: (&str, &str)) -> CliResult<SamplingRule> {
    let kind = cfg.get(rule_key).unwrap_or(default.0).to_string();
    let value = cfg.get(value_key).unwrap_or(default.1).to_string();
    cfg.set(rule_key, kind.as_str());
    cfg.set(value_key, value.as_str());
    parse_rule(&kind, &value)
}

fn overlap_mode(cfg: &mut Config) -> CliResult<OverlapMode> {
    let token = cfg.get("overlap_mode").unwrap_or("exclude").to_string();
    cfg.set("overlap_mode", token.as_str());
    match token.as_str() {
        "exclude" => Ok(OverlapMode::Exclude),
        "merged" => Ok(OverlapMode::MergedConsensus),
        other => Err(CliError::Usage(format!("unknown overlap mode `{other}` (expected exclude or merged)"))),
    }
}

fn class(cfg: &mut Config, default: Label) -> CliResult<Label> {
    let label = match cfg.get("class") {
        Some(token) => token
            .parse::<Label>()
            .map_err(|_| CliError::Usage(format!("unknown class `{token}` (expected real or fake)")))?,
        None => default,
    };
    cfg.set("class", label.token());
    Ok(label)
}

/// `k_max` from the config, else the number of distinct fake algorithm ids.
fn k_max(cfg: &mut Config, table: &EmbeddingTable) -> CliResult<usize> {
    let k = match cfg.parse::<usize>("k_max")? {
        Some(k) => k,
        None => table
            .class(Label::Fake)
            .map(|r| r.algorithm_id)
            .collect::<BTreeSet<_>>()
            .len()
            .max(1),
    };
    cfg.set("k_max", k.to_string());
    Ok(k)
}

fn synthetic_config(cfg: &mut Config) -> CliResult<SyntheticConfig> {
    let d = SyntheticConfig::default();
    let synth = SyntheticConfig {
        dimension: cfg.parse_or("dimension", d.dimension)?,
        n_real: cfg.parse_or("n_real", d.n_real)?,
        n_fake: cfg.parse_or("n_fake", d.n_fake)?,
        fake_modes: cfg.parse_or("fake_modes", d.fake_modes)?,
        mode_separation: cfg.parse_or("mode_separation", d.mode_separation)?,
        within_std: cfg.parse_or("within_std", d.within_std)?,
        seed: cfg.seed()?,
    };
    cfg.set("dimension", synth.dimension.to_string());
    cfg.set("n_real", synth.n_real.to_string());
    cfg.set("n_fake", synth.n_fake.to_string());
    cfg.set("fake_modes", synth.fake_modes.to_string());
    cfg.set("mode_separation", synth.mode_separation.to_string());
    cfg.set("within_std", synth.within_std.to_string());
    synth.validate()?;
    Ok(synth)
}

fn training_params(cfg: &mut Config, table: &EmbeddingTable) -> CliResult<(usize, f64)> {
    let epochs = cfg.parse_or("epochs", DEFAULT_EPOCHS)?;
    cfg.set("epochs", epochs.to_string());
    let token = cfg.get("lr").unwrap_or("auto").to_string();
    cfg.set("lr", token.as_str());
    let lr = learning_rate(&token, table)?;
    cfg.set("lr_resolved", lr.to_string());
    Ok((epochs, lr))
}

fn learning_rate(token: &str, table: &EmbeddingTable) -> CliResult<f64> {
    match token {
        "auto" => Ok(toy_model::safe_learning_rate(table)),
        raw => raw
            .parse::<f64>()
            .map_err(|_| CliError::Usage(format!("invalid value `{raw}` for `lr`"))),
    }
}

#[derive(Serialize)]
struct TableSummary {
    records: usize,
    n_real: usize,
    n_fake: usize,
    dimension: usize,
}

fn summary(table: &EmbeddingTable) -> TableSummary {
    TableSummary {
        records: table.len(),
        n_real: table.count(Label::Real),
        n_fake: table.count(Label::Fake),
        dimension: table.dimension(),
    }
}

#[derive(serde::Deserialize)]
struct AudioRow {
    path: String,
    label: String,
    algorithm_id: u16,
}

fn cmd_extract_features(cfg: Config) -> CliResult<()> {
    let manifest = input(&cfg)?;
    let out = out_dir(&cfg)?;
    let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut reader = csv::Reader::from_path(&manifest).map_err(|e| csv_error(e, &manifest))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(e, &manifest))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["path", "label", "algorithm_id"] {
        return Err(Error::MalformedRow {
            line: 1,
            reason: format!("expected header path,label,algorithm_id, found {}", header.join(",")),
        }
        .into());
    }

    let stft = features::Stft::new();
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<AudioRow>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRow {
            line: i as u64 + 2,
            reason: e.to_string(),
        })?;
        let label: Label = row.label.parse()?;
        let clip = features::load_wav(base.join(&row.path))?;
        let clip = features::fix_duration(&clip, features::DEFAULT_SECONDS)?;
        let mel = features::log_mel(&stft.power(&clip)?, features::DEFAULT_FLOOR)?;
        let embedding = mel.flatten().into_iter().map(|v| v as f32).collect();
        let algorithm_id = if label == Label::Real { 0 } else { row.algorithm_id };
        records.push(EmbeddingRecord::new(row.path, label, algorithm_id, embedding));
    }
    let dimension = records.first().map_or(0, |r| r.embedding.len());
    let table = EmbeddingTable::new(dimension, records)?;
    store_table(&table, out.join(FEATURES_FILE))?;
    Ok(())
}

fn csv_error(e: csv::Error, path: &Path) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::IoFailure(io).into(),
        other => Error::MalformedRow {
            line: 0,
            reason: format!("{}: {other:?}", path.display()),
        }
        .into(),
    }
}

fn cmd_synth(mut cfg: Config) -> CliResult<()> {
    let out = out_dir(&cfg)?;
    let synth = synthetic_config(&mut cfg)?;
    let table = toy_model::generate_synthetic(&synth)?;
    store_table(&table, out.join(EMBEDDINGS_FILE))?;
    write_report(&out.join(SYNTH_REPORT_FILE), &cfg, summary(&table))
}

fn cmd_interest(mut cfg: Config) -> CliResult<()> {
    let table = load_table(input(&cfg)?)?;
    let scores = read_score_table(cfg.path("scores")?)?;
    let out = out_dir(&cfg)?;
    let threshold = cfg.parse_or("threshold", DEFAULT_DECISION_THRESHOLD)?;
    cfg.set("threshold", threshold.to_string());
    let kept = collapse::samples_of_interest(&table, &scores, threshold)?;
    store_table(&kept, out.join(INTEREST_FILE))?;

    #[derive(Serialize)]
    struct Body {
        input: TableSummary,
        kept: TableSummary,
    }
    write_report(
        &out.join(INTEREST_REPORT_FILE),
        &cfg,
        Body {
            input: summary(&table),
            kept: summary(&kept),
        },
    )
}

fn cmd_geometry(cfg: Config) -> CliResult<()> {
    let table = load_table(input(&cfg)?)?;
    let out = out_dir(&cfg)?;
    let geometry = collapse::geometry(&table)?;
    let projection = collapse::pca_projection(&table)?;

    #[derive(Serialize)]
    struct Body<'a> {
        geometry: &'a ClassGeometry,
        pca_axes: &'a [Vec<f64>; 2],
        pca_explained_variance: [f64; 2],
    }
    write_report(
        &out.join(GEOMETRY_FILE),
        &cfg,
        Body {
            geometry: &geometry,
            pca_axes: &projection.axes,
            pca_explained_variance: projection.explained_variance,
        },
    )?;

    let mut w = csv::Writer::from_path(out.join(PROJECTION_FILE)).map_err(|e| csv_error(e, &out))?;
    let io = |e: csv::Error| csv_error(e, Path::new(PROJECTION_FILE));
    w.write_record(["sample_id", "label", "algorithm_id", "pc1", "pc2"]).map_err(io)?;
    for (r, xy) in table.records().iter().zip(&projection.coords) {
        w.write_record([
            r.sample_id.clone(),
            r.label.token().to_string(),
            r.algorithm_id.to_string(),
            xy[0].to_string(),
            xy[1].to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn cmd_sample_real(mut cfg: Config) -> CliResult<()> {
    let table = load_table(input(&cfg)?)?;
    let out = out_dir(&cfg)?;
    let label = class(&mut cfg, Label::Real)?;
    let rule = rule_from(&mut cfg, "rule", "value", ("top-fraction", "1.0"))?;
    let manifest = sampler::select_class(&table, label, rule)?;
    write_manifest(&manifest, out.join(MANIFEST_FILE))?;
    Ok(())
}

#[derive(Serialize)]
struct ClusterBody<'a> {
    k: usize,
    cluster_sizes: Vec<usize>,
    centers: &'a [Vec<f64>],
    radii: &'a [f64],
    inertia: f64,
    overlap: &'a OverlapReport,
    groups: Vec<Vec<usize>>,
    candidates: &'a [KCandidate],
    selected: usize,
}

fn cluster_body(selection: &KSelection, selected: usize) -> ClusterBody<'_> {
    ClusterBody {
        k: selection.clustering.k,
        cluster_sizes: selection.clustering.cluster_sizes(),
        centers: &selection.clustering.centers,
        radii: &selection.clustering.radii,
        inertia: selection.clustering.inertia,
        overlap: &selection.overlap,
        groups: selection.overlap.groups(),
        candidates: &selection.candidates,
        selected,
    }
}

fn cmd_sample_fake(mut cfg: Config) -> CliResult<()> {
    let table = load_table(input(&cfg)?)?;
    let out = out_dir(&cfg)?;
    let rule = rule_from(&mut cfg, "rule", "value", ("top-fraction", "0.5"))?;
    let k_max = k_max(&mut cfg, &table)?;
    let seed = cfg.seed()?;
    let mode = overlap_mode(&mut cfg)?;
    let (manifest, selection) = sampler::sample_fake_class_detailed(&table, rule, k_max, seed, mode)?;
    write_manifest(&manifest, out.join(MANIFEST_FILE))?;
    write_report(&out.join(CLUSTERS_FILE), &cfg, cluster_body(&selection, manifest.len()))
}

fn cmd_sample_random(mut cfg: Config) -> CliResult<()> {
    let table = load_table(input(&cfg)?)?;
    let out = out_dir(&cfg)?;
    let n: usize = cfg
        .parse("value")?
        .ok_or_else(|| CliError::Usage("sample-random needs --value <samples per class>".into()))?;
    let seed = cfg.seed()?;
    let manifest = sampler::select_random(&table, n, seed)?;
    write_manifest(&manifest, out.join(MANIFEST_FILE))?;
    Ok(())
}

fn cmd_merge(cfg: Config) -> CliResult<()> {
    let paths = cfg.paths("input")?;
    let out = out_dir(&cfg)?;
    let mut merged = SelectionManifest::new(Vec::new())?;
    for path in paths {
        merged = sampler::merge_manifests(&merged, &read_manifest(path)?)?;
    }
    write_manifest(&merged, out.join(MANIFEST_FILE))?;
    Ok(())
}

#[derive(Serialize)]
struct ModelBody<'a> {
    train: TableSummary,
    train_accuracy: f64,
    model: &'a LinearModel,
}

fn train(cfg: &mut Config, table: &EmbeddingTable) -> CliResult<LinearModel> {
    let (epochs, lr) = training_params(cfg, table)?;
    Ok(toy_model::train_linear(table, epochs, lr)?)
}

fn write_model(path: &Path, cfg: &Config, model: &LinearModel, table: &EmbeddingTable) -> CliResult<()> {
    write_report(
        path,
        cfg,
        ModelBody {
            train: summary(table),
            train_accuracy: toy_model::accuracy(model, table)?,
            model,
        },
    )
}

fn cmd_train_toy(mut cfg: Config) -> CliResult<()> {
    let full = load_table(input(&cfg)?)?;
    let out = out_dir(&cfg)?;
    let table = match cfg.get("manifest") {
        Some(path) => sampler::training_subset(&full, &read_manifest(path)?),
        None => full.clone(),
    };
    let model = train(&mut cfg, &table)?;
    write_model(&out.join(MODEL_FILE), &cfg, &model, &table)?;
    let scored = match cfg.get("eval_input") {
        Some(path) => load_table(path)?,
        None => full,
    };
    write_score_table(&toy_model::predict_scores(&model, &scored)?, out.join(SCORES_FILE))?;
    Ok(())
}

fn cmd_eval(cfg: Config) -> CliResult<()> {
    let scores = read_score_table(cfg.path("scores")?)?;
    let out = out_dir(&cfg)?;
    let metrics = evaluate(&scores)?;
    write_report(&out.join(METRICS_FILE), &cfg, metrics)
}

/// Final numbers of a `pipeline` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineMetrics {
    pub full: Metrics,
    pub sampled: Metrics,
    pub n_train_full: usize,
    pub n_train_sampled: usize,
    pub sampled_fraction: f64,
}

/// Runs the whole chain and writes every intermediate artifact under `--out`.
///
/// Without `--input` the training table is synthesized from the config with
/// `seed` and the held-out table with `seed + 1`.
pub fn cmd_pipeline(mut cfg: Config) -> CliResult<PipelineMetrics> {
    let out = out_dir(&cfg)?;
    let seed = cfg.seed()?;
    let (train_table, heldout) = if cfg.get("input").is_some() {
        let train_table = load_table(input(&cfg)?)?;
        let heldout = load_table(cfg.path("eval_input")?)?;
        (train_table, heldout)
    } else {
        let synth = synthetic_config(&mut cfg)?;
        let train_table = toy_model::generate_synthetic(&synth)?;
        let heldout = toy_model::generate_synthetic(&SyntheticConfig {
            seed: seed.wrapping_add(1),
            ..synth
        })?;
        store_table(&train_table, out.join(EMBEDDINGS_FILE))?;
        store_table(&heldout, out.join(HELDOUT_FILE))?;
        (train_table, heldout)
    };

    let real_rule = rule_from(&mut cfg, "real_rule", "real_value", ("top-fraction", "1.0"))?;
    let fake_rule = rule_from(&mut cfg, "rule", "value", ("top-fraction", "0.5"))?;
    let mode = overlap_mode(&mut cfg)?;
    let threshold = cfg.parse_or("threshold", DEFAULT_DECISION_THRESHOLD)?;
    cfg.set("threshold", threshold.to_string());
    let (epochs, lr_full) = training_params(&mut cfg, &train_table)?;

    let full_model = toy_model::train_linear(&train_table, epochs, lr_full)?;
    let train_scores = toy_model::predict_scores(&full_model, &train_table)?;
    write_score_table(&train_scores, out.join(SCORES_FILE))?;

    let interest = collapse::samples_of_interest(&train_table, &train_scores, threshold)?;
    store_table(&interest, out.join(INTEREST_FILE))?;
    let geometry = collapse::geometry(&interest)?;

    let k_max = k_max(&mut cfg, &interest)?;
    let real = sampler::select_class(&interest, Label::Real, real_rule)?;
    let (fake, selection) = sampler::sample_fake_class_detailed(&interest, fake_rule, k_max, seed, mode)?;
    let manifest = sampler::merge_manifests(&real, &fake)?;
    write_manifest(&manifest, out.join(MANIFEST_FILE))?;

    let subset = sampler::training_subset(&train_table, &manifest);
    let lr_sampled = learning_rate(cfg.require("lr")?, &subset)?;
    cfg.set("lr_resolved_sampled", lr_sampled.to_string());
    let sampled_model = toy_model::train_linear(&subset, epochs, lr_sampled)?;

    let full = evaluate(&toy_model::predict_scores(&full_model, &heldout)?)?;
    let sampled = evaluate(&toy_model::predict_scores(&sampled_model, &heldout)?)?;
    let result = PipelineMetrics {
        full,
        sampled,
        n_train_full: train_table.len(),
        n_train_sampled: subset.len(),
        sampled_fraction: subset.len() as f64 / train_table.len() as f64,
    };

    write_model(&out.join(FULL_MODEL_FILE), &cfg, &full_model, &train_table)?;
    write_model(&out.join(MODEL_FILE), &cfg, &sampled_model, &subset)?;
    write_report(&out.join(GEOMETRY_FILE), &cfg, &geometry)?;
    write_report(&out.join(CLUSTERS_FILE), &cfg, cluster_body(&selection, fake.len()))?;
    write_report(&out.join(METRICS_FILE), &cfg, &result)?;
    Ok(result)
}
