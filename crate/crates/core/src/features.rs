//! Syntactic features of a parsed target sentence.
//!
//! Six feature groups feed the syntax model: POS bigram and trigram counts,
//! dependency-tree depth, mean dependency distance, the root's POS tag, a
//! passive-voice flag and a subordination flag. Punctuation (`PUNCT`) is
//! removed before n-grams and distances are computed.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::conllu::{ParsedSentence, Token};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("cannot build a vocabulary from zero sentences")]
    EmptyTrainingSet,
    #[error("vocabulary file line {line}: {msg}")]
    VocabFormat { line: usize, msg: String },
    #[error("unknown feature group {0:?}")]
    UnknownGroup(String),
}

pub type Bigram = [String; 2];
pub type Trigram = [String; 3];

const VOCAB_HEADER: &str = "ngram-vocab v1";

/// The n-gram and root-tag inventory observed in training, in first
/// occurrence order. The order defines the model's input layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramVocabulary {
    bigrams: Vec<Bigram>,
    trigrams: Vec<Trigram>,
    root_tags: Vec<String>,
    bigram_index: HashMap<Bigram, usize>,
    trigram_index: HashMap<Trigram, usize>,
    root_index: HashMap<String, usize>,
}

fn filtered_tags(sentence: &ParsedSentence) -> Vec<&str> {
    sentence.non_punct().map(|t| t.upos.as_str()).collect()
}

impl NgramVocabulary {
    pub fn new(bigrams: Vec<Bigram>, trigrams: Vec<Trigram>, root_tags: Vec<String>) -> Self {
        let bigram_index = bigrams.iter().cloned().enumerate().map(|(i, b)| (b, i)).collect();
        let trigram_index = trigrams.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        let root_index = root_tags.iter().cloned().enumerate().map(|(i, r)| (r, i)).collect();
        NgramVocabulary { bigrams, trigrams, root_tags, bigram_index, trigram_index, root_index }
    }

    pub fn bigrams(&self) -> &[Bigram] {
        &self.bigrams
    }

    pub fn trigrams(&self) -> &[Trigram] {
        &self.trigrams
    }

    pub fn root_tags(&self) -> &[String] {
        &self.root_tags
    }

    pub fn ngram_dim(&self) -> usize {
        self.bigrams.len() + self.trigrams.len()
    }

    /// Serializes to the versioned vocabulary file format: a header with the
    /// three counts, then bigrams, trigrams and root tags one per line, with
    /// the tags of an n-gram separated by tabs.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{VOCAB_HEADER} bigrams={} trigrams={} roots={}\n",
            self.bigrams.len(),
            self.trigrams.len(),
            self.root_tags.len()
        );
        for b in &self.bigrams {
            out.push_str(&b.join("\t"));
            out.push('\n');
        }
        for t in &self.trigrams {
            out.push_str(&t.join("\t"));
            out.push('\n');
        }
        for r in &self.root_tags {
            out.push_str(r);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, FeatureError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, msg: String| FeatureError::VocabFormat { line, msg };
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
        let rest = header
            .strip_prefix(VOCAB_HEADER)
            .ok_or_else(|| err(1, format!("expected header {VOCAB_HEADER:?}")))?;
        let mut counts = [None; 3];
        for field in rest.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| err(1, format!("bad field {field:?}")))?;
            let slot = match key {
                "bigrams" => 0,
                "trigrams" => 1,
                "roots" => 2,
                _ => return Err(err(1, format!("unknown field {key:?}"))),
            };
            counts[slot] = Some(value.parse::<usize>().map_err(|_| err(1, format!("bad count {value:?}")))?);
        }
        let [Some(nb), Some(nt), Some(nr)] = counts else {
            return Err(err(1, "header must give bigrams, trigrams and roots".into()));
        };
        let mut take = |n: usize, width: usize| -> Result<Vec<Vec<String>>, FeatureError> {
            (0..n)
                .map(|_| {
                    let (i, line) = lines.next().ok_or_else(|| err(0, "unexpected end of file".into()))?;
                    let tags: Vec<String> = line.split('\t').map(str::to_string).collect();
                    if tags.len() != width || tags.iter().any(String::is_empty) {
                        return Err(err(i + 1, format!("expected {width} tag(s), got {line:?}")));
                    }
                    Ok(tags)
                })
                .collect()
        };
        let bigrams = take(nb, 2)?.into_iter().map(|v| [v[0].clone(), v[1].clone()]).collect();
        let trigrams = take(nt, 3)?
            .into_iter()
            .map(|v| [v[0].clone(), v[1].clone(), v[2].clone()])
            .collect();
        let roots = take(nr, 1)?.into_iter().map(|mut v| v.remove(0)).collect();
        if let Some((i, line)) = lines.find(|(_, l)| !l.trim().is_empty()) {
            return Err(err(i + 1, format!("trailing content {line:?}")));
        }
        let vocab = NgramVocabulary::new(bigrams, trigrams, roots);
        if vocab.bigram_index.len() != nb || vocab.trigram_index.len() != nt || vocab.root_index.len() != nr {
            return Err(err(0, "duplicate entries".into()));
        }
        Ok(vocab)
    }

    /// SHA-256 of the rendered file, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.render().as_bytes()))
    }
}

/// Collects every bigram, trigram and root tag of the training parses.
pub fn build_vocab(train: &[ParsedSentence]) -> Result<NgramVocabulary, FeatureError> {
    if train.is_empty() {
        return Err(FeatureError::EmptyTrainingSet);
    }
    let mut bigrams: Vec<Bigram> = Vec::new();
    let mut trigrams: Vec<Trigram> = Vec::new();
    let mut roots: Vec<String> = Vec::new();
    let mut seen_b = std::collections::HashSet::new();
    let mut seen_t = std::collections::HashSet::new();
    let mut seen_r = std::collections::HashSet::new();
    for sentence in train {
        let tags = filtered_tags(sentence);
        for w in tags.windows(2) {
            let b = [w[0].to_string(), w[1].to_string()];
            if seen_b.insert(b.clone()) {
                bigrams.push(b);
            }
        }
        for w in tags.windows(3) {
            let t = [w[0].to_string(), w[1].to_string(), w[2].to_string()];
            if seen_t.insert(t.clone()) {
                trigrams.push(t);
            }
        }
        if let Some(root) = sentence.root() {
            if seen_r.insert(root.upos.clone()) {
                roots.push(root.upos.clone());
            }
        }
    }
    Ok(NgramVocabulary::new(bigrams, trigrams, roots))
}

/// Bigram counts followed by trigram counts, in vocabulary order.
/// Out-of-vocabulary windows are ignored.
pub fn extract_ngrams(sentence: &ParsedSentence, vocab: &NgramVocabulary) -> Vec<u32> {
    let mut counts = vec![0u32; vocab.ngram_dim()];
    let tags = filtered_tags(sentence);
    let offset = vocab.bigrams.len();
    for w in tags.windows(2) {
        let key = [w[0].to_string(), w[1].to_string()];
        if let Some(&i) = vocab.bigram_index.get(&key) {
            counts[i] += 1;
        }
    }
    for w in tags.windows(3) {
        let key = [w[0].to_string(), w[1].to_string(), w[2].to_string()];
        if let Some(&i) = vocab.trigram_index.get(&key) {
            counts[offset + i] += 1;
        }
    }
    counts
}

/// Largest number of head edges between any non-punctuation token and the
/// root. Paths may pass through punctuation, but punctuation tokens are never
/// the deepest point.
pub fn tree_depth(sentence: &ParsedSentence) -> usize {
    let n = sentence.tokens.len();
    let mut depth: Vec<Option<usize>> = vec![None; n + 1];
    let mut max = 0;
    for start in 1..=n {
        // Walk up until a token of known depth (or the root) is reached,
        // then fill in the path on the way back.
        let mut path = Vec::new();
        let mut cur = start;
        let mut base = loop {
            if let Some(d) = depth[cur] {
                break d;
            }
            let head = sentence.tokens[cur - 1].head;
            if head == 0 {
                depth[cur] = Some(0);
                break 0;
            }
            path.push(cur);
            cur = head;
            if path.len() > n {
                // Not a tree; callers validate first.
                break 0;
            }
        };
        for &p in path.iter().rev() {
            base += 1;
            depth[p] = Some(base);
        }
        if !sentence.tokens[start - 1].is_punct() {
            max = max.max(depth[start].unwrap_or(0));
        }
    }
    max
}

/// Mean of `|index - head|` over non-root, non-punctuation tokens; 0 when
/// there are none.
pub fn mean_dep_distance(sentence: &ParsedSentence) -> f64 {
    let distances: Vec<usize> = sentence
        .non_punct()
        .filter(|t| !t.is_root())
        .map(|t| t.index.abs_diff(t.head))
        .collect();
    if distances.is_empty() {
        0.0
    } else {
        distances.iter().sum::<usize>() as f64 / distances.len() as f64
    }
}

const PASSIVE_AUX_LEMMA: &str = "werden";

fn is_werden_aux(t: &Token) -> bool {
    t.upos == "AUX" && t.lemma == PASSIVE_AUX_LEMMA
}

/// Passive voice: a `:pass` relation anywhere in the sentence, or a
/// participle governed by a form of "werden" (either as its head or through
/// a "werden" auxiliary attached to it).
pub fn is_passive(sentence: &ParsedSentence) -> bool {
    if sentence.tokens.iter().any(|t| t.deprel.contains(":pass")) {
        return true;
    }
    sentence.tokens.iter().filter(|t| t.feat("VerbForm") == Some("Part")).any(|part| {
        let head_is_werden = sentence.head_of(part).is_some_and(|h| h.lemma == PASSIVE_AUX_LEMMA);
        let has_werden_aux = sentence.tokens.iter().any(|t| t.head == part.index && is_werden_aux(t));
        head_is_werden || has_werden_aux
    })
}

/// At least one subordinating conjunction.
pub fn has_subordination(sentence: &ParsedSentence) -> bool {
    sentence.tokens.iter().any(|t| t.upos == "SCONJ")
}

/// Model input for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub ngram_counts: Vec<u32>,
    pub depth: usize,
    pub mdd: f64,
    /// One slot per training root tag plus a final slot for unseen tags.
    pub root_onehot: Vec<u8>,
    pub is_passive: bool,
    pub has_subordination: bool,
}

pub fn featurize(sentence: &ParsedSentence, vocab: &NgramVocabulary) -> FeatureVector {
    let mut root_onehot = vec![0u8; vocab.root_tags.len() + 1];
    let slot = sentence
        .root()
        .and_then(|r| vocab.root_index.get(&r.upos).copied())
        .unwrap_or(vocab.root_tags.len());
    root_onehot[slot] = 1;
    FeatureVector {
        ngram_counts: extract_ngrams(sentence, vocab),
        depth: tree_depth(sentence),
        mdd: mean_dep_distance(sentence),
        root_onehot,
        is_passive: is_passive(sentence),
        has_subordination: has_subordination(sentence),
    }
}

/// The seven removable input groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureGroup {
    Depth,
    Mdd,
    Root,
    Passive,
    Subordination,
    Bigrams,
    Trigrams,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 7] = [
        FeatureGroup::Depth,
        FeatureGroup::Mdd,
        FeatureGroup::Root,
        FeatureGroup::Passive,
        FeatureGroup::Subordination,
        FeatureGroup::Bigrams,
        FeatureGroup::Trigrams,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureGroup::Depth => "depth",
            FeatureGroup::Mdd => "mdd",
            FeatureGroup::Root => "root",
            FeatureGroup::Passive => "passive",
            FeatureGroup::Subordination => "subordination",
            FeatureGroup::Bigrams => "bigrams",
            FeatureGroup::Trigrams => "trigrams",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureGroup {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| FeatureError::UnknownGroup(s.to_string()))
    }
}

/// Set of feature groups that are removed from the model input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct FeatureMask(u8);

impl FeatureMask {
    pub fn full() -> Self {
        FeatureMask(0)
    }

    pub fn without(groups: &[FeatureGroup]) -> Self {
        FeatureMask(groups.iter().fold(0, |acc, g| acc | g.bit()))
    }

    pub fn excludes(self, group: FeatureGroup) -> bool {
        self.0 & group.bit() != 0
    }

    pub fn excluded(self) -> Vec<FeatureGroup> {
        FeatureGroup::ALL.into_iter().filter(|g| self.excludes(*g)).collect()
    }

    /// Comma-separated excluded group names, empty for the full model.
    pub fn render(self) -> String {
        self.excluded().iter().map(|g| g.name()).collect::<Vec<_>>().join(",")
    }

    pub fn parse(s: &str) -> Result<Self, FeatureError> {
        let groups = s
            .split(',')
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<FeatureGroup>, _>>()?;
        Ok(FeatureMask::without(&groups))
    }

    /// Width of the n-gram input branch under this mask.
    pub fn ngram_dim(self, vocab: &NgramVocabulary) -> usize {
        let mut dim = 0;
        if !self.excludes(FeatureGroup::Bigrams) {
            dim += vocab.bigrams.len();
        }
        if !self.excludes(FeatureGroup::Trigrams) {
            dim += vocab.trigrams.len();
        }
        dim
    }

    /// Width of the remaining-features input branch under this mask.
    pub fn other_dim(self, vocab: &NgramVocabulary) -> usize {
        let mut dim = 0;
        for (group, width) in [
            (FeatureGroup::Depth, 1),
            (FeatureGroup::Mdd, 1),
            (FeatureGroup::Root, vocab.root_tags.len() + 1),
            (FeatureGroup::Passive, 1),
            (FeatureGroup::Subordination, 1),
        ] {
            if !self.excludes(group) {
                dim += width;
            }
        }
        dim
    }
}

impl FeatureVector {
    /// Splits the vector into the two input branches of the network, leaving
    /// out masked groups. The n-gram branch is returned sparsely as
    /// `(position, count)` pairs.
    pub fn to_input(&self, mask: FeatureMask, n_bigrams: usize) -> ModelInput {
        let mut ngrams = Vec::new();
        let mut pos = 0;
        let (bi, tri) = self.ngram_counts.split_at(n_bigrams.min(self.ngram_counts.len()));
        for (group, counts) in [(FeatureGroup::Bigrams, bi), (FeatureGroup::Trigrams, tri)] {
            if mask.excludes(group) {
                continue;
            }
            for (i, &c) in counts.iter().enumerate() {
                if c != 0 {
                    ngrams.push((pos + i, c as f64));
                }
            }
            pos += counts.len();
        }
        let mut other = Vec::new();
        if !mask.excludes(FeatureGroup::Depth) {
            other.push(self.depth as f64);
        }
        if !mask.excludes(FeatureGroup::Mdd) {
            other.push(self.mdd);
        }
        if !mask.excludes(FeatureGroup::Root) {
            other.extend(self.root_onehot.iter().map(|&b| b as f64));
        }
        if !mask.excludes(FeatureGroup::Passive) {
            other.push(self.is_passive as u8 as f64);
        }
        if !mask.excludes(FeatureGroup::Subordination) {
            other.push(self.has_subordination as u8 as f64);
        }
        ModelInput { ngram_dim: pos, ngrams, other }
    }
}

/// Network input: a sparse n-gram branch and a dense branch with the
/// remaining features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub ngram_dim: usize,
    /// Non-zero `(position, value)` entries, positions strictly increasing.
    pub ngrams: Vec<(usize, f64)>,
    pub other: Vec<f64>,
}

impl ModelInput {
    pub fn dense_ngrams(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.ngram_dim];
        for &(i, x) in &self.ngrams {
            v[i] = x;
        }
        v
    }

    pub fn from_dense(ngrams: &[f64], other: &[f64]) -> Self {
        ModelInput {
            ngram_dim: ngrams.len(),
            ngrams: ngrams.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect(),
            other: other.to_vec(),
        }
    }
}
