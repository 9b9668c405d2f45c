//! Corpus loading, rating aggregation, split statistics and oversampling.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"id": "t-001", "context": ["…", "…", "…"], "target": "…", "ratings": [4, 4, 3, 4, 4], "split": "train"}
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::formulae;
use crate::text;

pub const MIN_RATINGS: usize = 4;
pub const MAX_RATINGS: usize = 6;
pub const MAX_CONTEXT: usize = 3;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: rating {value} outside 1-4")]
    RatingOutOfRange { line: usize, value: i64 },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("rating list is empty")]
    EmptyRatings,
    #[error("invalid rating {0} (expected 1-4)")]
    InvalidRating(u8),
    #[error("vote {0} outside [1, 4]")]
    VoteOutOfRange(f64),
    #[error("{0}: empty input")]
    EmptyInput(&'static str),
    #[error("unknown split {0:?} (expected train, dev or eval)")]
    UnknownSplit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Eval,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Eval];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Eval => "eval",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "eval" => Ok(Split::Eval),
            other => Err(CorpusError::UnknownSplit(other.to_string())),
        }
    }
}

/// One annotated corpus item: up to three context sentences and the rated
/// target sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub context: Vec<String>,
    pub target: String,
    pub ratings: Vec<u8>,
    pub split: Split,
}

/// Wire shape of a corpus line. Ratings are read as wide integers so that
/// out-of-range values produce a precise error instead of a serde overflow.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    context: Vec<String>,
    target: String,
    ratings: Vec<i64>,
    split: String,
}

fn record_from_line(line_no: usize, line: &str) -> Result<Record, CorpusError> {
    let malformed = |msg: String| CorpusError::Malformed { line: line_no, msg };
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
    if raw.target.trim().is_empty() {
        return Err(malformed("empty target sentence".into()));
    }
    if raw.context.len() > MAX_CONTEXT {
        return Err(malformed(format!("{} context sentences (max {MAX_CONTEXT})", raw.context.len())));
    }
    if let Some(&bad) = raw.ratings.iter().find(|r| !(1..=4).contains(*r)) {
        return Err(CorpusError::RatingOutOfRange { line: line_no, value: bad });
    }
    if !(MIN_RATINGS..=MAX_RATINGS).contains(&raw.ratings.len()) {
        return Err(malformed(format!(
            "{} ratings (expected {MIN_RATINGS}-{MAX_RATINGS})",
            raw.ratings.len()
        )));
    }
    let split = raw.split.parse().map_err(|e: CorpusError| malformed(e.to_string()))?;
    Ok(Record {
        id: raw.id,
        context: raw.context,
        target: raw.target,
        ratings: raw.ratings.into_iter().map(|r| r as u8).collect(),
        split,
    })
}

/// Parses line-delimited records from a reader. Blank lines are skipped.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Record>, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::Malformed { line: line_no, msg: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = record_from_line(line_no, &line)?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId { line: line_no, id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Record>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_corpus(BufReader::new(file))
}

/// Serializes records in the corpus line format.
pub fn write_corpus(records: &[Record]) -> String {
    let mut out = String::new();
    for r in records {
        let line = serde_json::json!({
            "id": r.id,
            "context": r.context,
            "target": r.target,
            "ratings": r.ratings,
            "split": r.split.as_str(),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

fn check_ratings(ratings: &[u8]) -> Result<(), CorpusError> {
    if ratings.is_empty() {
        return Err(CorpusError::EmptyRatings);
    }
    match ratings.iter().find(|r| !(1..=4).contains(*r)) {
        Some(&bad) => Err(CorpusError::InvalidRating(bad)),
        None => Ok(()),
    }
}

/// Occurrences of each rating value; index 0 is rating 1.
fn rating_counts(ratings: &[u8]) -> [usize; 4] {
    let mut counts = [0; 4];
    for &r in ratings {
        counts[(r - 1) as usize] += 1;
    }
    counts
}

/// Frequency of the most common rating.
pub fn mode_frequency(ratings: &[u8]) -> Result<usize, CorpusError> {
    check_ratings(ratings)?;
    Ok(rating_counts(ratings).into_iter().max().unwrap_or(0))
}

/// Mode frequency divided by the number of ratings, or 0 when no rating
/// occurs at least twice.
pub fn mode_agreement(ratings: &[u8]) -> Result<f64, CorpusError> {
    let freq = mode_frequency(ratings)?;
    if freq >= 2 {
        Ok(freq as f64 / ratings.len() as f64)
    } else {
        Ok(0.0)
    }
}

/// The most frequent rating; ties are resolved by the mean of the tied
/// values, which yields the half-step classes 1.5, 2.5 and 3.5.
pub fn majority_vote(ratings: &[u8]) -> Result<f64, CorpusError> {
    check_ratings(ratings)?;
    let counts = rating_counts(ratings);
    let best = counts.iter().copied().max().unwrap_or(0);
    let tied: Vec<f64> = (1..=4u8)
        .filter(|&v| counts[(v - 1) as usize] == best)
        .map(f64::from)
        .collect();
    Ok(tied.iter().sum::<f64>() / tied.len() as f64)
}

/// Maps a vote on the 1-4 scale to `[0, 1]`.
pub fn normalize(vote: f64) -> Result<f64, CorpusError> {
    if !(1.0..=4.0).contains(&vote) {
        return Err(CorpusError::VoteOutOfRange(vote));
    }
    Ok((vote - 1.0) / 3.0)
}

/// Inverse of [`normalize`].
pub fn denormalize(score: f64) -> f64 {
    3.0 * score + 1.0
}

/// A majority-vote class, stored in half steps so it can be used as a key.
///
/// Two-way ties always average to a whole or half step. A three-way tie among
/// six ratings can average to a third (`[1,1,2,2,4,4]` gives 7/3); such votes
/// fall into the nearest half-step class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoteClass(u8);

impl VoteClass {
    pub fn from_ratings(ratings: &[u8]) -> Result<Self, CorpusError> {
        Self::from_vote(majority_vote(ratings)?)
    }

    pub fn from_vote(vote: f64) -> Result<Self, CorpusError> {
        if !(1.0..=4.0).contains(&vote) {
            return Err(CorpusError::VoteOutOfRange(vote));
        }
        Ok(VoteClass((vote * 2.0).round() as u8))
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for VoteClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

/// Gold label of one record derived from its ratings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub majority_vote: f64,
    pub normalized: f64,
    pub mode_agreement: f64,
    pub mean: f64,
    /// Population standard deviation of the ratings.
    pub std: f64,
}

impl AggregatedLabel {
    pub fn from_ratings(ratings: &[u8]) -> Result<Self, CorpusError> {
        let majority = majority_vote(ratings)?;
        let n = ratings.len() as f64;
        let mean = ratings.iter().map(|&r| r as f64).sum::<f64>() / n;
        let var = ratings.iter().map(|&r| (r as f64 - mean).powi(2)).sum::<f64>() / n;
        Ok(AggregatedLabel {
            majority_vote: majority,
            normalized: normalize(majority)?,
            mode_agreement: mode_agreement(ratings)?,
            mean,
            std: var.sqrt(),
        })
    }

    pub fn class(&self) -> VoteClass {
        VoteClass::from_vote(self.majority_vote).expect("majority vote lies in [1, 4]")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledRecord {
    pub record: Record,
    pub label: AggregatedLabel,
}

pub fn label_records(records: &[Record]) -> Result<Vec<LabeledRecord>, CorpusError> {
    records
        .iter()
        .map(|r| {
            Ok(LabeledRecord {
                record: r.clone(),
                label: AggregatedLabel::from_ratings(&r.ratings)?,
            })
        })
        .collect()
}

/// Randomly duplicates records of every minority majority-vote class until
/// each class is as large as the largest one.
///
/// Output: all input items in input order, followed by the drawn duplicates
/// grouped by class in ascending class order. Draws are uniform with
/// replacement from the class's original members.
pub fn oversample(items: &[LabeledRecord], seed: u64) -> Result<Vec<LabeledRecord>, CorpusError> {
    if items.is_empty() {
        return Err(CorpusError::EmptyInput("oversample"));
    }
    let mut by_class: BTreeMap<VoteClass, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_class.entry(item.label.class()).or_default().push(i);
    }
    let target = by_class.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = items.to_vec();
    for members in by_class.values() {
        for _ in members.len()..target {
            let pick = *members.choose(&mut rng).expect("class has members");
            out.push(items[pick].clone());
        }
    }
    Ok(out)
}

/// Per-split dataset statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_sentences: usize,
    pub avg_words_per_sentence: f64,
    pub avg_syllables_per_word: f64,
    /// Percentage of sentences where at least three annotators agree.
    pub pct_geq3_agree: f64,
    /// Mean per-sentence mode agreement, as a percentage.
    pub pct_mode_agreement: f64,
    /// Unweighted mean of the per-sentence rating means.
    pub avg_mean: f64,
    pub avg_std: f64,
    pub avg_majority: f64,
    pub vote_histogram: BTreeMap<VoteClass, usize>,
}

/// Note printed with every stats report.
pub const AVG_MEAN_CONVENTION: &str =
    "avg_mean averages per-sentence rating means without weighting by annotator count";

/// Computes statistics for a set of records. Syllables per word is the
/// corpus-level ratio (total syllables over total words).
pub fn split_stats(records: &[Record]) -> Result<SplitStats, CorpusError> {
    if records.is_empty() {
        return Err(CorpusError::EmptyInput("split_stats"));
    }
    let n = records.len() as f64;
    let mut words = 0usize;
    let mut syllables = 0usize;
    let mut geq3 = 0usize;
    let mut mode_sum = 0.0;
    let mut mean_sum = 0.0;
    let mut std_sum = 0.0;
    let mut majority_sum = 0.0;
    let mut histogram = BTreeMap::new();
    for r in records {
        let label = AggregatedLabel::from_ratings(&r.ratings)?;
        for w in text::words(&r.target) {
            words += 1;
            syllables += formulae::count_syllables(w).expect("tokenizer yields non-empty words");
        }
        if mode_frequency(&r.ratings)? >= 3 {
            geq3 += 1;
        }
        mode_sum += label.mode_agreement;
        mean_sum += label.mean;
        std_sum += label.std;
        majority_sum += label.majority_vote;
        *histogram.entry(label.class()).or_insert(0) += 1;
    }
    Ok(SplitStats {
        n_sentences: records.len(),
        avg_words_per_sentence: words as f64 / n,
        avg_syllables_per_word: if words == 0 { 0.0 } else { syllables as f64 / words as f64 },
        pct_geq3_agree: 100.0 * geq3 as f64 / n,
        pct_mode_agreement: 100.0 * mode_sum / n,
        avg_mean: mean_sum / n,
        avg_std: std_sum / n,
        avg_majority: majority_sum / n,
        vote_histogram: histogram,
    })
}

impl SplitStats {
    /// Key/value lines in a fixed order; used for both the text and the
    /// machine-readable report.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("n_sentences".to_string(), self.n_sentences.to_string()),
            ("avg_words_per_sentence".to_string(), format!("{:.2}", self.avg_words_per_sentence)),
            ("avg_syllables_per_word".to_string(), format!("{:.2}", self.avg_syllables_per_word)),
            ("pct_geq3_agree".to_string(), format!("{:.1}", self.pct_geq3_agree)),
            ("pct_mode_agreement".to_string(), format!("{:.1}", self.pct_mode_agreement)),
            ("avg_mean".to_string(), format!("{:.3}", self.avg_mean)),
            ("avg_std".to_string(), format!("{:.3}", self.avg_std)),
            ("avg_majority".to_string(), format!("{:.3}", self.avg_majority)),
        ];
        for (class, count) in &self.vote_histogram {
            out.push((format!("votes_{class}"), count.to_string()));
        }
        out
    }
}
