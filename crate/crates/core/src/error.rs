use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the search engine and its supporting modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown layer shorthand `{0}`")]
    UnknownShorthand(String),

    #[error("duplicate layer shorthand `{0}` in library")]
    DuplicateShorthand(String),

    #[error("invalid layer type `{shorthand}`: {reason}")]
    InvalidLayerType { shorthand: String, reason: String },

    #[error("invalid prototype dimensions: {0}")]
    InvalidDimensions(String),

    #[error("row {row} out of range for prototype with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("invalid prototype: {0}")]
    InvalidPrototype(String),

    #[error("selection is empty")]
    EmptySelection,

    #[error("sequence {index} has length {found}, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("no rows left to average after excluding fresh rows")]
    NoIncludableRows,

    #[error("invalid probability cap: {0}")]
    InvalidCap(String),

    #[error("infeasible architecture: pooling at layer {layer} reduces a {height}x{width} input below 1")]
    InfeasibleArchitecture { layer: usize, height: usize, width: usize },

    #[error("invalid shortcut ({start}, {end}) for {layers} layers")]
    InvalidShortcut { start: usize, end: usize, layers: usize },

    #[error("confusion matrix is empty")]
    EmptyConfusionMatrix,

    #[error("invalid confusion matrix: {0}")]
    InvalidConfusionMatrix(String),

    #[error("cannot select top {k_s} of {available} candidates")]
    SelectionTooLarge { k_s: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evaluation aborted at iteration {iteration}: {reason}")]
    EvaluationAborted { iteration: usize, reason: String },

    #[error("evaluator pool exhausted: {0}")]
    PoolExhausted(String),

    #[error("missing run artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
