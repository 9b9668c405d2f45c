//! Trainable predictors: the sentence-length baseline, the syntax MLP and
//! the boosted-tree aggregator over formula scores, plus mean ensembling and
//! the text artifact format all of them are stored in.

use thiserror::Error;

pub mod artifact;
pub mod ensemble;
pub mod gbt;
pub mod linear;
pub mod mlp;

pub use ensemble::ensemble_mean;
pub use gbt::{gbt_train, GbtModel, GbtParams};
pub use linear::{fit_length_baseline, LinearModel};
pub use mlp::{mlp_grad_check, mlp_train, MlpModel, Sample, TrainConfig};

/// Arithmetic mean computed as offsets from the first value, so that a
/// constant input yields exactly that constant.
pub(crate) fn mean(values: &[f64]) -> f64 {
    let first = values[0];
    first + values.iter().map(|v| v - first).sum::<f64>() / values.len() as f64
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("inconsistent model shape: {0}")]
    Shape(String),
    #[error("input dimensions {got:?} do not match model dimensions {expected:?}")]
    DimensionMismatch { expected: (usize, usize), got: (usize, usize) },
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("prediction sets disagree at row {row}: id {left:?} vs {right:?}")]
    IdMismatch { row: usize, left: String, right: String },
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("artifact line {line}: {msg}")]
    Artifact { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
