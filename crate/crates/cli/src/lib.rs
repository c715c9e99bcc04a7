//! Batch front end: data ingestion, synthetic data, filtering, prediction,
//! partition sampling and hyperparameter selection with run manifests.

// guards are written as `!(x > 0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod manifest;
pub mod run;
pub mod synthetic;

pub use config::{Grid, Pipeline, RunConfig};
pub use dataset::{ingest, Dataset, Format};
pub use error::{CliError, Result};
