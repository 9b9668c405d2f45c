//! Training and prediction over a corpus joined with its dependency parses.
//!
//! Seeds: the training split is oversampled with `seed`; the network is
//! initialized with `seed + 1` and shuffled with `seed + 2`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::conllu::{parse_validated, ConlluError, ParsedSentence};
use crate::corpus::{label_records, load_corpus, oversample, CorpusError, LabeledRecord, Record, Split};
use crate::eval::{evaluate, AblationDelta, EvalError, EvalReport};
use crate::features::{build_vocab, featurize, FeatureError, FeatureGroup, FeatureMask, ModelInput, NgramVocabulary};
use crate::formulae::{formula_scores, FormulaConfig, FormulaError, HkpsCoefficients, LixForm};
use crate::models::artifact::{self, Artifact};
use crate::models::{gbt_train, mlp_train, GbtModel, GbtParams, LinearModel, MlpModel, ModelError, Sample, TrainConfig};
use crate::predictions::Prediction;
use crate::text::words;

pub const ARTIFACT_FILE: &str = "model.artifact";
pub const VOCAB_FILE: &str = "vocab.txt";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Conllu(#[from] ConlluError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("no dependency parse for record {0:?}")]
    MissingParse(String),
    #[error("the {0} split is empty")]
    EmptySplit(Split),
    #[error("model directory: {0}")]
    ModelDir(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Length,
    Formulae,
    Syntax,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Length => artifact::LENGTH_KIND,
            ModelKind::Formulae => artifact::GBT_KIND,
            ModelKind::Syntax => artifact::MLP_KIND,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "length" => Ok(ModelKind::Length),
            "formulae" => Ok(ModelKind::Formulae),
            "syntax" => Ok(ModelKind::Syntax),
            _ => Err(format!("unknown model {s:?} (expected length, formulae or syntax)")),
        }
    }
}

/// Labeled records plus their parses, keyed by record id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<LabeledRecord>,
    pub parses: HashMap<String, ParsedSentence>,
}

impl Dataset {
    pub fn new(records: &[Record], parses: Vec<ParsedSentence>) -> Result<Self, PipelineError> {
        let records = label_records(records)?;
        let parses = parses.into_iter().map(|p| (p.sent_id.clone(), p)).collect();
        Ok(Dataset { records, parses })
    }

    pub fn load(corpus: &Path, conllu: Option<&Path>) -> Result<Self, PipelineError> {
        let records = load_corpus(corpus)?;
        let parses = match conllu {
            Some(path) => parse_validated(&std::fs::read_to_string(path).map_err(io_err(path))?)?,
            None => Vec::new(),
        };
        Self::new(&records, parses)
    }

    pub fn split(&self, split: Split) -> Vec<LabeledRecord> {
        self.records.iter().filter(|r| r.record.split == split).cloned().collect()
    }

    pub fn parse_of(&self, id: &str) -> Result<&ParsedSentence, PipelineError> {
        self.parses.get(id).ok_or_else(|| PipelineError::MissingParse(id.to_string()))
    }

    /// `(id, normalized majority vote)` for every record of a split.
    pub fn gold(&self, split: Split) -> Vec<(String, f64)> {
        self.records
            .iter()
            .filter(|r| r.record.split == split)
            .map(|r| (r.record.id.clone(), r.label.normalized))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub kind: ModelKind,
    pub seed: u64,
    pub mlp: TrainConfig,
    pub gbt: GbtParams,
    pub formulae: FormulaConfig,
    pub mask: FeatureMask,
}

impl TrainOptions {
    pub fn new(kind: ModelKind, seed: u64) -> Self {
        TrainOptions {
            kind,
            seed,
            mlp: TrainConfig::default(),
            gbt: GbtParams::default(),
            formulae: FormulaConfig::default(),
            mask: FeatureMask::full(),
        }
    }

    /// Resolved settings as flat key/value pairs, for manifests.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e = vec![("model".to_string(), self.kind.to_string()), ("seed".to_string(), self.seed.to_string())];
        match self.kind {
            ModelKind::Length => {}
            ModelKind::Formulae => {
                e.push(("gbt".into(), serde_json::to_string(&self.gbt).expect("serializable")));
                e.push(("lix_form".into(), self.formulae.lix_form.to_string()));
                e.push(("hkps".into(), self.formulae.hkps.stamp()));
            }
            ModelKind::Syntax => {
                let mlp = TrainConfig { seed: self.seed.wrapping_add(1), ..self.mlp.clone() };
                e.push(("mlp".into(), serde_json::to_string(&mlp).expect("serializable")));
                e.push(("feature_mask".into(), self.mask.render()));
            }
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictor {
    Length(LinearModel),
    Formulae { model: GbtModel, config: FormulaConfig },
    Syntax { model: MlpModel, vocab: NgramVocabulary, mask: FeatureMask },
}

pub fn word_count(sentence: &str) -> usize {
    words(sentence).len()
}

fn syntax_input(parse: &ParsedSentence, vocab: &NgramVocabulary, mask: FeatureMask) -> ModelInput {
    featurize(parse, vocab).to_input(mask, vocab.bigrams().len())
}

impl Predictor {
    pub fn kind(&self) -> ModelKind {
        match self {
            Predictor::Length(_) => ModelKind::Length,
            Predictor::Formulae { .. } => ModelKind::Formulae,
            Predictor::Syntax { .. } => ModelKind::Syntax,
        }
    }

    /// Unclamped score for one record.
    pub fn predict(&self, record: &Record, data: &Dataset) -> Result<f64, PipelineError> {
        Ok(match self {
            Predictor::Length(m) => m.predict(word_count(&record.target)),
            Predictor::Formulae { model, config } => {
                model.predict(&formula_scores(&record.target, config)?.to_array())?
            }
            Predictor::Syntax { model, vocab, mask } => {
                model.predict(&syntax_input(data.parse_of(&record.id)?, vocab, *mask))?
            }
        })
    }

    /// Predicts every record in order. With `time`, also returns the mean
    /// wall-clock seconds per prediction, excluding one warm-up call.
    pub fn predict_all(
        &self,
        records: &[LabeledRecord],
        data: &Dataset,
        time: bool,
    ) -> Result<(Vec<Prediction>, Option<f64>), PipelineError> {
        if time {
            if let Some(first) = records.first() {
                self.predict(&first.record, data)?;
            }
        }
        let mut elapsed = 0.0;
        let mut preds = Vec::with_capacity(records.len());
        for r in records {
            let start = Instant::now();
            let score = self.predict(&r.record, data)?;
            elapsed += start.elapsed().as_secs_f64();
            preds.push(Prediction::new(r.record.id.clone(), score));
        }
        let avg = (time && !records.is_empty()).then(|| elapsed / records.len() as f64);
        Ok((preds, avg))
    }

    pub fn to_artifact(&self) -> Artifact {
        let mut art = match self {
            Predictor::Length(m) => artifact::linear_to_artifact(m),
            Predictor::Formulae { model, config } => {
                let mut art = artifact::gbt_to_artifact(model);
                art.set_meta("lix_form", config.lix_form.to_string());
                art.set_meta("hkps", config.hkps.stamp());
                art
            }
            Predictor::Syntax { model, mask, .. } => {
                let mut art = artifact::mlp_to_artifact(model);
                art.set_meta("feature_mask", mask.render());
                art
            }
        };
        art.set_meta("version", crate::ARTIFACT_VERSION);
        art
    }

    /// Writes `model.artifact` (and `vocab.txt` for the syntax model) into
    /// `dir`, with extra metadata such as the training configuration.
    pub fn save(&self, dir: &Path, meta: &[(String, String)]) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut art = self.to_artifact();
        for (k, v) in meta {
            if art.meta(k).is_none() {
                art.set_meta(&format!("train.{k}"), v.clone());
            }
        }
        let path = dir.join(ARTIFACT_FILE);
        std::fs::write(&path, art.render()).map_err(io_err(&path))?;
        if let Predictor::Syntax { vocab, .. } = self {
            let path = dir.join(VOCAB_FILE);
            std::fs::write(&path, vocab.render()).map_err(io_err(&path))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let path = dir.join(ARTIFACT_FILE);
        let art = Artifact::parse(&std::fs::read_to_string(&path).map_err(io_err(&path))?)?;
        match art.kind.parse::<ModelKind>().map_err(PipelineError::ModelDir)? {
            ModelKind::Length => Ok(Predictor::Length(artifact::linear_from_artifact(&art)?)),
            ModelKind::Formulae => {
                let lix_form: LixForm = art.require_meta("lix_form")?.parse()?;
                let hkps = HkpsCoefficients::from_stamp(art.require_meta("hkps")?)?;
                let model = artifact::gbt_from_artifact(&art)?;
                if model.n_features != 5 {
                    return Err(PipelineError::ModelDir(format!("{} formula features, expected 5", model.n_features)));
                }
                Ok(Predictor::Formulae { model, config: FormulaConfig { lix_form, hkps } })
            }
            ModelKind::Syntax => {
                let model = artifact::mlp_from_artifact(&art)?;
                let mask = FeatureMask::parse(art.require_meta("feature_mask")?)?;
                let vpath = dir.join(VOCAB_FILE);
                let vocab = NgramVocabulary::parse(&std::fs::read_to_string(&vpath).map_err(io_err(&vpath))?)?;
                if vocab.fingerprint() != model.vocab_fingerprint {
                    return Err(PipelineError::ModelDir(format!(
                        "{VOCAB_FILE} does not match the vocabulary the model was trained with"
                    )));
                }
                if mask.ngram_dim(&vocab) != model.ngram_dim() || mask.other_dim(&vocab) != model.other_dim() {
                    return Err(PipelineError::ModelDir("feature mask does not match the model input widths".into()));
                }
                Ok(Predictor::Syntax { model, vocab, mask })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub predictor: Predictor,
    /// Training diagnostics, e.g. the best epoch.
    pub info: Vec<(String, String)>,
}

fn non_empty(records: Vec<LabeledRecord>, split: Split) -> Result<Vec<LabeledRecord>, PipelineError> {
    if records.is_empty() {
        Err(PipelineError::EmptySplit(split))
    } else {
        Ok(records)
    }
}

/// Trains one predictor on the (oversampled) training split; the syntax
/// model also uses the dev split for early stopping.
pub fn train(data: &Dataset, opts: &TrainOptions) -> Result<Trained, PipelineError> {
    let train_split = non_empty(data.split(Split::Train), Split::Train)?;
    let train_set = oversample(&train_split, opts.seed)?;
    let targets: Vec<f64> = train_set.iter().map(|r| r.label.normalized).collect();
    let mut info = vec![
        ("train_records".to_string(), train_split.len().to_string()),
        ("train_after_oversampling".to_string(), train_set.len().to_string()),
    ];
    let predictor = match opts.kind {
        ModelKind::Length => {
            let counts: Vec<usize> = train_set.iter().map(|r| word_count(&r.record.target)).collect();
            Predictor::Length(crate::models::fit_length_baseline(&counts, &targets)?)
        }
        ModelKind::Formulae => {
            let rows = train_set
                .iter()
                .map(|r| Ok(formula_scores(&r.record.target, &opts.formulae)?.to_array().to_vec()))
                .collect::<Result<Vec<_>, FormulaError>>()?;
            let model = gbt_train(&rows, &targets, &opts.gbt)?;
            Predictor::Formulae { model, config: opts.formulae.clone() }
        }
        ModelKind::Syntax => {
            let dev_split = non_empty(data.split(Split::Dev), Split::Dev)?;
            let train_parses =
                train_split.iter().map(|r| data.parse_of(&r.record.id).cloned()).collect::<Result<Vec<_>, _>>()?;
            let vocab = build_vocab(&train_parses)?;
            // Oversampled duplicates share one featurization.
            let mut cache: HashMap<String, ModelInput> = HashMap::new();
            let mut samples = |records: &[LabeledRecord]| -> Result<Vec<Sample>, PipelineError> {
                let mut out = Vec::with_capacity(records.len());
                for r in records {
                    let id = &r.record.id;
                    if !cache.contains_key(id) {
                        cache.insert(id.clone(), syntax_input(data.parse_of(id)?, &vocab, opts.mask));
                    }
                    out.push(Sample { input: cache[id].clone(), target: r.label.normalized });
                }
                Ok(out)
            };
            let train_samples = samples(&train_set)?;
            let dev_samples = samples(&dev_split)?;
            let config = TrainConfig { seed: opts.seed.wrapping_add(1), ..opts.mlp.clone() };
            let outcome = mlp_train(&train_samples, &dev_samples, &config)?;
            let mut model = outcome.model;
            model.vocab_fingerprint = vocab.fingerprint();
            info.push(("best_epoch".into(), outcome.best_epoch.to_string()));
            info.push(("epochs_run".into(), outcome.history.len().to_string()));
            if let Some(best) = outcome.history.get(outcome.best_epoch - 1) {
                info.push(("best_dev_mse".into(), best.dev_mse.to_string()));
            }
            Predictor::Syntax { model, vocab, mask: opts.mask }
        }
    };
    Ok(Trained { predictor, info })
}

/// Trains, predicts the eval split and scores it.
pub fn train_and_evaluate(data: &Dataset, opts: &TrainOptions) -> Result<(Trained, EvalReport), PipelineError> {
    let trained = train(data, opts)?;
    let eval = non_empty(data.split(Split::Eval), Split::Eval)?;
    let (preds, _) = trained.predictor.predict_all(&eval, data, false)?;
    let report = evaluate(&clamped(preds), &data.gold(Split::Eval), None)?;
    Ok((trained, report))
}

/// Scores as they would be written to a prediction file.
pub fn clamped(preds: Vec<Prediction>) -> Vec<Prediction> {
    preds.into_iter().map(|p| Prediction { score: p.score.clamp(0.0, 1.0), ..p }).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub full: EvalReport,
    pub ablated: EvalReport,
    pub delta: AblationDelta,
}

/// Retrains the syntax model without `groups` and compares it with the full
/// model trained under the same options.
pub fn ablate(data: &Dataset, opts: &TrainOptions, groups: &[FeatureGroup]) -> Result<AblationResult, PipelineError> {
    let full_opts = TrainOptions { kind: ModelKind::Syntax, mask: FeatureMask::full(), ..opts.clone() };
    let ablated_opts = TrainOptions { mask: FeatureMask::without(groups), ..full_opts.clone() };
    let (_, full) = train_and_evaluate(data, &full_opts)?;
    let (_, ablated) = train_and_evaluate(data, &ablated_opts)?;
    let name = groups.iter().map(|g| g.name()).collect::<Vec<_>>().join("+");
    let delta = AblationDelta::new(&name, &full, &ablated);
    Ok(AblationResult { full, ablated, delta })
}

/// Flattens training diagnostics and options for a manifest.
pub fn describe(opts: &TrainOptions, trained: &Trained) -> BTreeMap<String, String> {
    opts.entries().into_iter().chain(trained.info.iter().cloned()).collect()
}
