//! Least-squares regression on the number of words per sentence.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weight: f64,
    pub bias: f64,
}

impl LinearModel {
    pub fn predict(&self, word_count: usize) -> f64 {
        self.weight * word_count as f64 + self.bias
    }
}

/// Ordinary least squares of `targets` on `word_counts`.
///
/// If every word count is the same the slope is unidentified; this is
/// logged and the constant model `bias = mean(targets)` is returned.
pub fn fit_length_baseline(word_counts: &[usize], targets: &[f64]) -> Result<LinearModel, ModelError> {
    if word_counts.len() != targets.len() {
        return Err(ModelError::LengthMismatch { left: word_counts.len(), right: targets.len() });
    }
    if word_counts.len() < 2 {
        return Err(ModelError::EmptyInput("length baseline data (need at least two points)"));
    }
    if let Some(bad) = targets.iter().find(|t| !t.is_finite()) {
        return Err(ModelError::NonFinite(format!("target {bad}")));
    }
    let n = targets.len() as f64;
    let x_mean = word_counts.iter().map(|&x| x as f64).sum::<f64>() / n;
    let y_mean = super::mean(targets);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in word_counts.iter().zip(targets) {
        let dx = x as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        log::warn!("all sentences have {x_mean} words; length baseline degenerates to the mean target");
        return Ok(LinearModel { weight: 0.0, bias: y_mean });
    }
    let weight = sxy / sxx;
    Ok(LinearModel { weight, bias: y_mean - weight * x_mean })
}
