//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("self-loop edge ({0}, {0}) is not allowed")]
    SelfLoop(usize),
    #[error("node index {index} out of range (num_nodes = {num_nodes})")]
    NodeOutOfRange { index: usize, num_nodes: usize },
    #[error("label {label} out of range (class_count = {class_count})")]
    LabelOutOfRange { label: usize, class_count: usize },
    #[error("unknown edge id {0}")]
    UnknownEdge(usize),
    #[error("graph schema violation: {0}")]
    Schema(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward requires a scalar output, got {rows}x{cols}")]
    NonScalarBackward { rows: usize, cols: usize },
    #[error("tensor ref {0} is not on this tape")]
    UnknownTensor(usize),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("training diverged at epoch {0} (non-finite loss)")]
    Divergence(usize),
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv parse error: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
