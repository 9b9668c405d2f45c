//! The `esg-ara` command line.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors. Every run
//! that writes files also writes one manifest next to them
//! (`manifest.txt` inside model directories, `<out>.manifest.txt` beside
//! single files).

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::corpus::{load_corpus, split_stats, Split, AVG_MEAN_CONVENTION};
use crate::eval::{evaluate, render_ablation_table, render_json, render_table, EvalReport};
use crate::features::{FeatureGroup, FeatureMask};
use crate::formulae::{FormulaConfig, HkpsCoefficients, LixForm};
use crate::llm_client::{render_failure_log, score_remote, select_shot, EndpointConfig};
use crate::models::{ensemble_mean, GbtParams, TrainConfig};
use crate::pipeline::{self, Dataset, ModelKind, Predictor, TrainOptions};
use crate::predictions::{load_predictions, write_predictions, Prediction};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Parser)]
#[command(name = "esg-ara", version, about = "Readability assessment for German ESG sentences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics per split.
    Stats(StatsArgs),
    /// Train a length, formulae or syntax model.
    Train(TrainCmd),
    /// Write predictions of a trained model.
    Predict(PredictArgs),
    /// Score prediction files against gold labels.
    Evaluate(EvaluateArgs),
    /// Retrain the syntax model without some feature groups and report the change.
    Ablate(AblateArgs),
    /// Average several prediction files.
    Ensemble(EnsembleArgs),
    /// Score sentences with a chat-completion endpoint.
    LlmScore(LlmArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Only this split (default: all three).
    #[arg(long)]
    pub split: Option<Split>,
    /// Print JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Also write the report to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// CoNLL-U parses of the target sentences (required for the syntax model).
    #[arg(long)]
    pub conllu: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 15)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    pub n_trees: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gbt_learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    pub max_depth: usize,
    #[arg(long, default_value_t = LixForm::Sum)]
    pub lix_form: LixForm,
    /// HKPS coefficient file (`name value` lines).
    #[arg(long)]
    pub hkps_coefficients: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainCmd {
    #[arg(long)]
    pub model: ModelKind,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Feature groups to leave out of the syntax model.
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<FeatureGroup>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model_dir: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub conllu: Option<PathBuf>,
    /// Only this split (default: every record).
    #[arg(long)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: PathBuf,
    /// Measure the mean time per sentence and write it to `<out>.timing.txt`.
    #[arg(long)]
    pub time: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = Split::Eval)]
    pub split: Split,
    /// Print JSON instead of the table.
    #[arg(long)]
    pub json: bool,
    /// Write `<out>` (table) and `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Feature group(s) to remove; repeat or comma-separate to remove several.
    #[arg(long, required = true, value_delimiter = ',')]
    pub group: Vec<FeatureGroup>,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Directory for the ablation report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long, required = true, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LlmArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Split to score; the shot is always drawn from the training split.
    #[arg(long, default_value_t = Split::Eval)]
    pub split: Split,
    #[arg(long)]
    pub endpoint: String,
    #[arg(long)]
    pub model_name: String,
    #[arg(long, default_value_t = 0)]
    pub shot_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub max_parallel: usize,
    #[arg(long, default_value_t = 60.0)]
    pub timeout_s: f64,
    /// Minimum milliseconds between request starts.
    #[arg(long, default_value_t = 0)]
    pub pacing_ms: u64,
    /// Base delay before the first retry; doubles on each further retry.
    #[arg(long, default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Provenance of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    /// `(role, sha256 hex)` of every input file.
    pub inputs: Vec<(String, String)>,
    pub artifact_version: String,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            config: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            artifact_version: crate::ARTIFACT_VERSION.to_string(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push((role.to_string(), file_digest(path)?));
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = format!("command\t{}\nartifact_version\t{}\n", self.command, self.artifact_version);
        if let Some(seed) = self.seed {
            out.push_str(&format!("seed\t{seed}\n"));
        }
        for (k, v) in &self.config {
            out.push_str(&format!("config.{k}\t{v}\n"));
        }
        for (role, digest) in &self.inputs {
            out.push_str(&format!("input.{role}\tsha256:{digest}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// `<path>.<suffix>`, e.g. `pred.csv.manifest.txt`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    }
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::Ensemble(a) => ensemble(a),
        Command::LlmScore(a) => llm_score(a),
    }
}

fn print(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let records = load_corpus(&a.corpus)?;
    let splits = match a.split {
        Some(s) => vec![s],
        None => vec![Split::Train, Split::Dev, Split::Eval],
    };
    let mut text = String::new();
    let mut json = serde_json::Map::new();
    for split in splits {
        let subset: Vec<_> = records.iter().filter(|r| r.split == split).cloned().collect();
        if subset.is_empty() {
            if a.split.is_some() {
                bail!("the {split} split is empty");
            }
            continue;
        }
        let s = split_stats(&subset)?;
        text.push_str(&format!("[{split}]\n"));
        for (k, v) in s.entries() {
            text.push_str(&format!("{k}\t{v}\n"));
        }
        text.push('\n');
        json.insert(split.to_string(), serde_json::to_value(&s)?);
    }
    text.push_str(&format!("# {AVG_MEAN_CONVENTION}\n"));
    let rendered = if a.json { serde_json::to_string_pretty(&json)? + "\n" } else { text };
    print(&rendered)?;
    if let Some(out) = &a.out {
        write_file(out, &rendered)?;
        let mut m = RunManifest::new("stats");
        m.set("split", a.split.map_or("all".to_string(), |s| s.to_string()));
        m.set("format", if a.json { "json" } else { "text" });
        m.input("corpus", &a.corpus)?;
        m.write(&sibling(out, MANIFEST_FILE))?;
    }
    Ok(())
}

fn train_options(kind: ModelKind, a: &TrainArgs, exclude: &[FeatureGroup]) -> Result<TrainOptions> {
    let hkps = match &a.hkps_coefficients {
        Some(path) => HkpsCoefficients::load(path)?,
        None => HkpsCoefficients::default(),
    };
    let mlp = TrainConfig {
        batch_size: a.batch_size,
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        patience: a.patience,
        seed: a.seed,
        weight_decay: a.weight_decay,
    };
    mlp.validate()?;
    Ok(TrainOptions {
        kind,
        seed: a.seed,
        mlp,
        gbt: GbtParams {
            n_trees: a.n_trees,
            learning_rate: a.gbt_learning_rate,
            max_depth: a.max_depth,
            ..GbtParams::default()
        },
        formulae: FormulaConfig { lix_form: a.lix_form, hkps },
        mask: FeatureMask::without(exclude),
    })
}

fn load_dataset(a: &TrainArgs, kind: ModelKind, m: &mut RunManifest) -> Result<Dataset> {
    if kind == ModelKind::Syntax && a.conllu.is_none() {
        bail!("the syntax model needs --conllu");
    }
    m.input("corpus", &a.corpus)?;
    if let Some(c) = &a.conllu {
        m.input("conllu", c)?;
    }
    if let Some(h) = &a.hkps_coefficients {
        m.input("hkps_coefficients", h)?;
    }
    Ok(Dataset::load(&a.corpus, a.conllu.as_deref())?)
}

fn train(a: TrainCmd) -> Result<()> {
    if a.model != ModelKind::Syntax && !a.exclude.is_empty() {
        bail!("--exclude only applies to the syntax model");
    }
    let opts = train_options(a.model, &a.train, &a.exclude)?;
    let mut m = RunManifest::new("train");
    m.seed = Some(opts.seed);
    let data = load_dataset(&a.train, a.model, &mut m)?;
    let trained = pipeline::train(&data, &opts)?;
    trained.predictor.save(&a.out, &opts.entries())?;
    for (k, v) in pipeline::describe(&opts, &trained) {
        m.set(&k, v);
    }
    m.write(&a.out.join(MANIFEST_FILE))?;
    log::info!("wrote {} model to {}", a.model, a.out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let predictor = Predictor::load(&a.model_dir)?;
    if predictor.kind() == ModelKind::Syntax && a.conllu.is_none() {
        bail!("the syntax model needs --conllu");
    }
    let data = Dataset::load(&a.corpus, a.conllu.as_deref())?;
    let records: Vec<_> = match a.split {
        Some(s) => data.split(s),
        None => data.records.clone(),
    };
    if records.is_empty() {
        bail!("no records to predict");
    }
    let (preds, avg) = predictor.predict_all(&records, &data, a.time)?;
    write_file(&a.out, &write_predictions(&preds))?;
    if let Some(avg) = avg {
        write_file(&sibling(&a.out, "timing.txt"), &format!("avg_time_per_sentence_s\t{avg}\n"))?;
    }
    let mut m = RunManifest::new("predict");
    m.set("model", predictor.kind());
    m.set("split", a.split.map_or("all".to_string(), |s| s.to_string()));
    m.input("model_artifact", &a.model_dir.join(pipeline::ARTIFACT_FILE))?;
    m.input("corpus", &a.corpus)?;
    if let Some(c) = &a.conllu {
        m.input("conllu", c)?;
    }
    m.write(&sibling(&a.out, MANIFEST_FILE))?;
    Ok(())
}

/// Reads the timing written by `predict --time`, if present.
fn read_timing(pred: &Path) -> Result<Option<f64>> {
    let path = sibling(pred, "timing.txt");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)?;
    let value = text
        .lines()
        .find_map(|l| l.strip_prefix("avg_time_per_sentence_s\t"))
        .ok_or_else(|| anyhow!("{}: no avg_time_per_sentence_s line", path.display()))?;
    Ok(Some(value.trim().parse().with_context(|| format!("{}: bad timing value", path.display()))?))
}

fn model_label(path: &Path) -> String {
    let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    name.strip_suffix(".csv").unwrap_or(&name).to_string()
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let data = Dataset::new(&load_corpus(&a.corpus)?, Vec::new())?;
    let gold = data.gold(a.split);
    if gold.is_empty() {
        bail!("the {} split is empty", a.split);
    }
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    for path in &a.pred {
        let preds = load_predictions(path).with_context(|| format!("reading {}", path.display()))?;
        let report = evaluate(&preds, &gold, read_timing(path)?).with_context(|| path.display().to_string())?;
        rows.push((model_label(path), report));
    }
    let table = render_table(&rows);
    let json = render_json(&rows);
    print(if a.json { &json } else { &table })?;
    if let Some(out) = &a.out {
        write_file(out, &table)?;
        write_file(&sibling(out, "json"), &json)?;
        let mut m = RunManifest::new("evaluate");
        m.set("split", a.split);
        m.input("corpus", &a.corpus)?;
        for (i, p) in a.pred.iter().enumerate() {
            m.input(&format!("pred.{i}"), p)?;
        }
        m.write(&sibling(out, MANIFEST_FILE))?;
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let opts = train_options(ModelKind::Syntax, &a.train, &[])?;
    let mut m = RunManifest::new("ablate");
    m.seed = Some(opts.seed);
    let data = load_dataset(&a.train, ModelKind::Syntax, &mut m)?;
    let result = pipeline::ablate(&data, &opts, &a.group)?;
    let rows = vec![("full".to_string(), result.full.clone()), (result.delta.group.clone(), result.ablated.clone())];
    let text = format!("{}\n{}", render_table(&rows), render_ablation_table(std::slice::from_ref(&result.delta)));
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "full": result.full,
        "ablated": result.ablated,
        "delta": result.delta,
    }))? + "\n";
    print(&text)?;
    write_file(&a.out.join("ablation.txt"), &text)?;
    write_file(&a.out.join("ablation.json"), &json)?;
    for (k, v) in opts.entries() {
        m.set(&k, v);
    }
    m.set("groups", FeatureMask::without(&a.group).render());
    m.write(&a.out.join(MANIFEST_FILE))?;
    Ok(())
}

/// Reorders `set` to follow the ids of `reference`.
fn align_to(reference: &[Prediction], set: Vec<Prediction>, path: &Path) -> Result<Vec<Prediction>> {
    if set.len() != reference.len() {
        bail!("{} has {} predictions, expected {}", path.display(), set.len(), reference.len());
    }
    let mut by_id: BTreeMap<String, f64> = set.into_iter().map(|p| (p.id, p.score)).collect();
    reference
        .iter()
        .map(|r| {
            by_id
                .remove(&r.id)
                .map(|score| Prediction::new(r.id.clone(), score))
                .ok_or_else(|| anyhow!("{} has no prediction for id {:?}", path.display(), r.id))
        })
        .collect()
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    let mut sets: Vec<Vec<Prediction>> = Vec::with_capacity(a.pred.len());
    for path in &a.pred {
        let set = load_predictions(path).with_context(|| format!("reading {}", path.display()))?;
        let set = match sets.first() {
            Some(first) => align_to(first, set, path)?,
            None => set,
        };
        sets.push(set);
    }
    write_file(&a.out, &write_predictions(&ensemble_mean(&sets)?))?;
    let mut m = RunManifest::new("ensemble");
    for (i, p) in a.pred.iter().enumerate() {
        m.input(&format!("pred.{i}"), p)?;
    }
    m.write(&sibling(&a.out, MANIFEST_FILE))?;
    Ok(())
}

fn llm_score(a: LlmArgs) -> Result<()> {
    if !(a.timeout_s.is_finite() && a.timeout_s > 0.0) {
        bail!("--timeout-s must be positive");
    }
    let data = Dataset::new(&load_corpus(&a.corpus)?, Vec::new())?;
    let train = data.split(Split::Train);
    let shot = select_shot(&train, a.shot_seed).ok_or_else(|| anyhow!("no training records to draw a shot from"))?;
    let targets: Vec<(String, String)> =
        data.split(a.split).into_iter().map(|r| (r.record.id, r.record.target)).collect();
    if targets.is_empty() {
        bail!("the {} split is empty", a.split);
    }
    let mut config = EndpointConfig::new(&a.endpoint, &a.model_name);
    config.timeout = Duration::from_secs_f64(a.timeout_s);
    config.max_parallel = a.max_parallel;
    config.pacing = Duration::from_millis(a.pacing_ms);
    config.backoff_base = Duration::from_millis(a.backoff_ms);
    log::info!("one-shot example: record {}", shot.record.id);
    let run = score_remote(&config, &targets, shot)?;
    write_file(&a.out, &write_predictions(&run.predictions))?;
    write_file(&sibling(&a.out, "failures.tsv"), &render_failure_log(&run.failures))?;
    if !run.failures.is_empty() {
        log::warn!("{} of {} replies had no rating", run.failures.len(), targets.len());
    }
    let mut m = RunManifest::new("llm-score");
    m.set("endpoint", config.url());
    m.set("model_name", &a.model_name);
    m.set("split", a.split);
    m.set("shot_seed", a.shot_seed);
    m.set("shot_id", &run.shot_id);
    m.set("max_parallel", a.max_parallel);
    m.set("timeout_s", a.timeout_s);
    m.set("scored", run.predictions.len());
    m.set("failed", run.failures.len());
    m.set("fallback_parsed", run.fallback_ids.len());
    m.seed = Some(a.shot_seed);
    m.input("corpus", &a.corpus)?;
    m.write(&sibling(&a.out, MANIFEST_FILE))?;
    Ok(())
}
