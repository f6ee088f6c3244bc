//! Library surface of the pipeline driver, so integration tests and the
//! binary share one implementation.

pub mod config;
pub mod dot;
pub mod pipeline;
pub mod report;
