//! Experiment harness for the `sparse-diff` estimator: configuration,
//! Monte Carlo runs, CSV output, error-bound audits, plots and the
//! `sparse-diff` command line.

pub mod bounds;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod records;
pub mod summary;

pub use bounds::{verify_bounds, BoundConstants, BoundReport};
pub use config::ExperimentConfig;
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, run_replicate, write_outputs, ExperimentOutput};
pub use records::ReplicateRecord;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
mod book_experiments {}
