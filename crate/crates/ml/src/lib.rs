//! Learning pipeline for anchor-zone prediction.
//!
//! Triples from `fcaz_core::generate` are turned into [`example::LabeledExample`]s,
//! fitted by one of the [`model`] learners and scored with [`metrics`] and the
//! re-simulation harness in [`evaluate`].

pub mod cv;
pub mod evaluate;
pub mod example;
pub mod io;
pub mod knn;
pub mod metrics;
pub mod model;
pub mod tree;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("need at least {need} examples, got {got}")]
    TooFewExamples { need: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("schema error at row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("model file error: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Generate(#[from] fcaz_core::generate::GenerateError),
    #[error(transparent)]
    Optimizer(#[from] fcaz_core::optimizer::OptimizerError),
}
