//! Configuration, experiment runs, persistence, evaluation and reporting.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod embeddings;
pub mod plot;
pub mod sweep;
