//! The `id,score` prediction file shared by every predictor and the
//! evaluator.

use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

pub const HEADER: &str = "id,score";

#[derive(Debug, Error)]
pub enum PredictionError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub score: f64,
}

impl Prediction {
    pub fn new(id: impl Into<String>, score: f64) -> Self {
        Prediction { id: id.into(), score }
    }
}

/// Renders predictions in input order. Scores are clamped to [0, 1] here and
/// nowhere else; values are written with the shortest round-tripping decimal.
pub fn write_predictions(preds: &[Prediction]) -> String {
    let mut out = String::with_capacity(16 * (preds.len() + 1));
    out.push_str(HEADER);
    out.push('\n');
    for p in preds {
        out.push_str(&p.id);
        out.push(',');
        out.push_str(&p.score.clamp(0.0, 1.0).to_string());
        out.push('\n');
    }
    out
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, PredictionError> {
    let mut preds = Vec::new();
    let mut seen = HashSet::new();
    let mut lines = reader.lines().enumerate();
    let io = |e| PredictionError::Io { path: "<input>".into(), source: e };
    let header = match lines.next() {
        Some((_, line)) => line.map_err(io)?,
        None => String::new(),
    };
    if header.trim() != HEADER {
        return Err(PredictionError::Malformed { line: 1, msg: format!("expected header {HEADER:?}") });
    }
    for (i, line) in lines {
        let line = line.map_err(io)?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, score) = line
            .rsplit_once(',')
            .ok_or_else(|| PredictionError::Malformed { line: lineno, msg: "expected id,score".into() })?;
        if id.is_empty() {
            return Err(PredictionError::Malformed { line: lineno, msg: "empty id".into() });
        }
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| PredictionError::Malformed { line: lineno, msg: format!("bad score {score:?}") })?;
        if !(0.0..=1.0).contains(&score) {
            return Err(PredictionError::Malformed { line: lineno, msg: format!("score {score} outside [0, 1]") });
        }
        if !seen.insert(id.to_string()) {
            return Err(PredictionError::DuplicateId { line: lineno, id: id.to_string() });
        }
        preds.push(Prediction::new(id, score));
    }
    Ok(preds)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, PredictionError> {
    let file = std::fs::File::open(path)
        .map_err(|e| PredictionError::Io { path: path.display().to_string(), source: e })?;
    read_predictions(std::io::BufReader::new(file))
}
