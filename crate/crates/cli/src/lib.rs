// SPDX-License-Identifier: MIT OR Apache-2.0

//! File formats, configuration and the `csas` command-line front end for
//! [`csas_core`].
//!
//! Every subcommand is also a library call: [`pipeline::run_stages`] covers
//! `cluster`, `segment` and `pipeline`, [`pipeline::run_fit`] covers `fit`,
//! and [`bench`] covers `simulate` and `benchmark`.

#![forbid(unsafe_code)]

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;

pub use config::{Aggregate, InputFormat, PipelineConfig};
pub use error::{CliError, Result};
pub use ingest::{ingest_csv, Dataset, DateRange};
pub use pipeline::{run_fit, run_stages, PipelineResult, Stage};
