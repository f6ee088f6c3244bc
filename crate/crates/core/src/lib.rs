//! Toolkit for edge-attribution-guided graph pruning.
//!
//! The pipeline: train a small graph attention model, produce per-node edge
//! attribution masks with one of seven methods, aggregate the local masks
//! into a global soft edge mask by summing or averaging, discard the
//! lowest-scored edges, and evaluate accuracy curves, method ranks and
//! fidelity of the pruned graphs.

pub mod aggregate;
pub mod attribution;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod metrics;
pub mod seeds;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
