//! Sentence-level readability assessment for German ESG report sentences.
//!
//! The crate covers the whole pipeline: loading crowd-annotated corpora and
//! aggregating their ratings ([`corpus`]), reading dependency parses
//! ([`conllu`]), extracting syntactic features ([`features`]), classical
//! readability formulae ([`formulae`]), the three trainable predictor families
//! ([`models`]), metrics and ablations ([`eval`]) and a chat-completion client
//! for LLM scoring ([`llm_client`]). The `esg-ara` binary wires these together
//! ([`cli`]).

pub mod cli;
pub mod conllu;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod formulae;
pub mod llm_client;
pub mod models;
pub mod pipeline;
pub mod predictions;
pub mod text;

/// Version string stamped into model artifacts and run manifests.
pub const ARTIFACT_VERSION: &str = concat!("esg-readability/", env!("CARGO_PKG_VERSION"));
