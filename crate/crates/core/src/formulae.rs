//! Classical readability formulae computed on a single sentence.
//!
//! All scores share one [`ShallowCounts`] pass over the punctuation-stripped
//! words of the sentence. The sentence count is always 1.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

#[derive(Debug, Error, PartialEq)]
pub enum FormulaError {
    #[error("cannot count syllables of an empty word")]
    EmptyWord,
    #[error("text contains no words: {0:?}")]
    NoWords(String),
    #[error("coefficient file line {line}: {msg}")]
    Coefficients { line: usize, msg: String },
    #[error("unknown LIX form {0:?} (expected `sum` or `product`)")]
    LixForm(String),
    #[error("reading coefficient file: {0}")]
    Io(String),
}

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u', 'ä', 'ö', 'ü', 'y'];

/// Counts maximal vowel groups in a German word, with a floor of one.
///
/// `u` directly after `q` is part of the consonant, so `Qualität` has the
/// groups `a`, `i`, `ä`.
pub fn count_syllables(word: &str) -> Result<usize, FormulaError> {
    if word.is_empty() {
        return Err(FormulaError::EmptyWord);
    }
    let mut groups = 0;
    let mut in_group = false;
    let mut prev = None;
    for c in word.chars().flat_map(char::to_lowercase) {
        let vowel = VOWELS.contains(&c) && !(c == 'u' && prev == Some('q'));
        if vowel && !in_group {
            groups += 1;
        }
        in_group = vowel;
        prev = Some(c);
    }
    Ok(groups.max(1))
}

/// Word-level counts behind every formula.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShallowCounts {
    pub words: usize,
    pub sentences: usize,
    pub syllables: usize,
    /// Words with at least three syllables.
    pub polysyllabic: usize,
    /// Words with exactly one syllable.
    pub monosyllabic: usize,
    /// Words with more than six characters.
    pub long_words: usize,
    /// Total characters over all words.
    pub characters: usize,
}

impl ShallowCounts {
    pub fn from_text(text: &str) -> Result<Self, FormulaError> {
        let words = text::words(text);
        if words.is_empty() {
            return Err(FormulaError::NoWords(text.to_string()));
        }
        let mut counts = ShallowCounts {
            words: words.len(),
            sentences: 1,
            syllables: 0,
            polysyllabic: 0,
            monosyllabic: 0,
            long_words: 0,
            characters: 0,
        };
        for word in words {
            let syl = count_syllables(word)?;
            let len = text::char_len(word);
            counts.syllables += syl;
            counts.characters += len;
            if syl >= 3 {
                counts.polysyllabic += 1;
            }
            if syl == 1 {
                counts.monosyllabic += 1;
            }
            if len > 6 {
                counts.long_words += 1;
            }
        }
        Ok(counts)
    }

    pub fn avg_sentence_length(&self) -> f64 {
        self.words as f64 / self.sentences as f64
    }

    pub fn avg_word_length(&self) -> f64 {
        self.characters as f64 / self.words as f64
    }

    fn pct(&self, n: usize) -> f64 {
        100.0 * n as f64 / self.words as f64
    }

    /// MS: percentage of polysyllabic words.
    pub fn pct_polysyllabic(&self) -> f64 {
        self.pct(self.polysyllabic)
    }

    /// ES: percentage of monosyllabic words.
    pub fn pct_monosyllabic(&self) -> f64 {
        self.pct(self.monosyllabic)
    }

    /// IW: percentage of words longer than six characters.
    pub fn pct_long(&self) -> f64 {
        self.pct(self.long_words)
    }
}

/// How the two LIX terms are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LixForm {
    /// Sentence length plus long-word percentage (the usual LIX).
    #[default]
    Sum,
    /// Sentence length times long-word percentage.
    Product,
}

impl FromStr for LixForm {
    type Err = FormulaError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(LixForm::Sum),
            "product" => Ok(LixForm::Product),
            other => Err(FormulaError::LixForm(other.to_string())),
        }
    }
}

impl fmt::Display for LixForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LixForm::Sum => "sum",
            LixForm::Product => "product",
        })
    }
}

/// Coefficients of the reconstructed Hohenheim complexity index.
///
/// `score = intercept - asl*ASL - avg_word_len*AWL - iw*IW - poly_prop*P`,
/// clamped to `[clamp_min, clamp_max]`, where ASL is words per sentence, AWL
/// is the mean word length in characters, IW is the long-word percentage and
/// P is the polysyllabic proportion in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HkpsCoefficients {
    pub intercept: f64,
    pub asl: f64,
    pub avg_word_len: f64,
    pub iw: f64,
    pub poly_prop: f64,
    pub clamp_min: f64,
    pub clamp_max: f64,
}

impl Default for HkpsCoefficients {
    fn default() -> Self {
        HkpsCoefficients {
            intercept: 15.0,
            asl: 0.3,
            avg_word_len: 1.0,
            iw: 0.05,
            poly_prop: 30.0,
            clamp_min: 0.0,
            clamp_max: 15.0,
        }
    }
}

impl HkpsCoefficients {
    const NAMES: [&'static str; 7] =
        ["intercept", "asl", "avg_word_len", "iw", "poly_prop", "clamp_min", "clamp_max"];

    fn values(&self) -> [f64; 7] {
        [
            self.intercept,
            self.asl,
            self.avg_word_len,
            self.iw,
            self.poly_prop,
            self.clamp_min,
            self.clamp_max,
        ]
    }

    /// Parses `name value` lines. Blank lines and `#` comments are ignored;
    /// every coefficient must be given exactly once.
    pub fn parse(text: &str) -> Result<Self, FormulaError> {
        let mut values: [Option<f64>; 7] = [None; 7];
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| FormulaError::Coefficients { line: line_no, msg };
            let mut parts = line.split_whitespace();
            let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(err(format!("expected `name value`, got {line:?}")));
            };
            let slot = Self::NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| err(format!("unknown coefficient {name:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| err(format!("invalid number {value:?}")))?;
            if !value.is_finite() {
                return Err(err(format!("non-finite value for {name}")));
            }
            if values[slot].replace(value).is_some() {
                return Err(err(format!("duplicate coefficient {name:?}")));
            }
        }
        let get = |slot: usize| {
            values[slot].ok_or_else(|| FormulaError::Coefficients {
                line: 0,
                msg: format!("missing coefficient {:?}", Self::NAMES[slot]),
            })
        };
        Ok(HkpsCoefficients {
            intercept: get(0)?,
            asl: get(1)?,
            avg_word_len: get(2)?,
            iw: get(3)?,
            poly_prop: get(4)?,
            clamp_min: get(5)?,
            clamp_max: get(6)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, FormulaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FormulaError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Renders the coefficient file format; `parse(render())` is the identity.
    pub fn render(&self) -> String {
        Self::NAMES
            .iter()
            .zip(self.values())
            .map(|(name, v)| format!("{name} {v}\n"))
            .collect()
    }

    /// Single-line, versioned description of the coefficients, recorded in
    /// model artifacts.
    pub fn stamp(&self) -> String {
        let body: Vec<String> = Self::NAMES
            .iter()
            .zip(self.values())
            .map(|(name, v)| format!("{name}={v}"))
            .collect();
        format!("hkps-v1;{}", body.join(";"))
    }

    /// Inverse of [`stamp`](Self::stamp).
    pub fn from_stamp(stamp: &str) -> Result<Self, FormulaError> {
        let body = stamp.strip_prefix("hkps-v1;").ok_or_else(|| FormulaError::Coefficients {
            line: 0,
            msg: format!("unrecognised stamp {stamp:?}"),
        })?;
        Self::parse(&body.replace(';', "\n").replace('=', " "))
    }
}

/// Settings shared by every formula computation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FormulaConfig {
    pub lix_form: LixForm,
    pub hkps: HkpsCoefficients,
}

/// The five classical scores of one sentence, in model-input order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulaScores {
    pub fre: f64,
    pub hkps: f64,
    pub poly_prop: f64,
    pub wstf1: f64,
    pub lix: f64,
}

impl FormulaScores {
    pub const NAMES: [&'static str; 5] = ["fre", "hkps", "poly_prop", "wstf1", "lix"];

    pub fn to_array(&self) -> [f64; 5] {
        [self.fre, self.hkps, self.poly_prop, self.wstf1, self.lix]
    }

    pub fn from_counts(counts: &ShallowCounts, config: &FormulaConfig) -> Self {
        FormulaScores {
            fre: fre_from_counts(counts),
            hkps: hkps_from_counts(counts, &config.hkps),
            poly_prop: counts.polysyllabic as f64 / counts.words as f64,
            wstf1: wstf1_from_counts(counts),
            lix: lix_from_counts(counts, config.lix_form),
        }
    }
}

fn fre_from_counts(c: &ShallowCounts) -> f64 {
    180.0 - c.avg_sentence_length() - 58.5 * (c.syllables as f64 / c.words as f64)
}

fn wstf1_from_counts(c: &ShallowCounts) -> f64 {
    0.1935 * c.pct_polysyllabic() + 0.1672 * c.avg_sentence_length() + 0.1297 * c.pct_long()
        - 0.0327 * c.pct_monosyllabic()
        - 0.875
}

fn lix_from_counts(c: &ShallowCounts, form: LixForm) -> f64 {
    let length_term = c.avg_sentence_length();
    let long_term = (c.long_words as f64 * 100.0) / c.words as f64;
    match form {
        LixForm::Sum => length_term + long_term,
        LixForm::Product => length_term * long_term,
    }
}

fn hkps_from_counts(c: &ShallowCounts, k: &HkpsCoefficients) -> f64 {
    let poly_prop = c.polysyllabic as f64 / c.words as f64;
    let raw = k.intercept
        - k.asl * c.avg_sentence_length()
        - k.avg_word_len * c.avg_word_length()
        - k.iw * c.pct_long()
        - k.poly_prop * poly_prop;
    raw.clamp(k.clamp_min, k.clamp_max)
}

/// Flesch reading ease with the German (Amstad) coefficients.
pub fn flesch_amstad(text: &str) -> Result<f64, FormulaError> {
    Ok(fre_from_counts(&ShallowCounts::from_text(text)?))
}

pub fn polysyllabic_proportion(text: &str) -> Result<f64, FormulaError> {
    let c = ShallowCounts::from_text(text)?;
    Ok(c.polysyllabic as f64 / c.words as f64)
}

/// First Vienna non-fiction text formula (WSTF 1).
pub fn wstf1(text: &str) -> Result<f64, FormulaError> {
    Ok(wstf1_from_counts(&ShallowCounts::from_text(text)?))
}

pub fn lix(text: &str, form: LixForm) -> Result<f64, FormulaError> {
    Ok(lix_from_counts(&ShallowCounts::from_text(text)?, form))
}

pub fn hkps(text: &str, coefficients: &HkpsCoefficients) -> Result<f64, FormulaError> {
    Ok(hkps_from_counts(&ShallowCounts::from_text(text)?, coefficients))
}

pub fn formula_scores(text: &str, config: &FormulaConfig) -> Result<FormulaScores, FormulaError> {
    Ok(FormulaScores::from_counts(&ShallowCounts::from_text(text)?, config))
}
