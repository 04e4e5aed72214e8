// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run configuration. Values come from command-line flags, then an optional
//! flat TOML file, then built-in defaults, in that order of precedence.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_DELTA: usize = csas_core::segmentation::DEFAULT_DELTA;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_AR_ORDER: usize = 2;
pub const DEFAULT_OUT: &str = "csas-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum InputFormat {
    /// One `region,date,count` row per observation.
    #[default]
    Long,
    /// A `date` column followed by one count column per region.
    Wide,
}

/// How a multi-region cluster becomes the single series that is segmented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregate {
    /// Pointwise mean of the members' `log(1 + y)` curves.
    #[default]
    MeanLog,
    /// `log(1 + y)` of the summed member counts.
    PooledCount,
}

/// Settings that may be given on the command line or in the config file.
#[derive(Debug, Clone, Default, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Input CSV file.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input layout [default: long].
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    /// First date kept (inclusive, YYYY-MM-DD).
    #[arg(long)]
    pub from: Option<NaiveDate>,
    /// Last date kept (inclusive, YYYY-MM-DD).
    #[arg(long)]
    pub to: Option<NaiveDate>,
    /// Minimum spacing between change points [default: 10].
    #[arg(long)]
    pub delta: Option<usize>,
    /// Confidence band level is 1 - alpha [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of autoregressive lags per segment [default: 2].
    #[arg(long)]
    #[serde(alias = "ar-order")]
    pub ar_order: Option<usize>,
    /// Cluster aggregation [default: mean-log].
    #[arg(long, value_enum)]
    pub aggregate: Option<Aggregate>,
    /// Output directory [default: csas-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fixed pruning threshold; skips BIC threshold selection.
    #[arg(long)]
    pub theta: Option<f64>,
}

impl Overrides {
    /// Fills every unset field from `lower`.
    pub fn or(self, lower: Overrides) -> Overrides {
        Overrides {
            input: self.input.or(lower.input),
            format: self.format.or(lower.format),
            from: self.from.or(lower.from),
            to: self.to.or(lower.to),
            delta: self.delta.or(lower.delta),
            alpha: self.alpha.or(lower.alpha),
            ar_order: self.ar_order.or(lower.ar_order),
            aggregate: self.aggregate.or(lower.aggregate),
            out: self.out.or(lower.out),
            theta: self.theta.or(lower.theta),
        }
    }
}

/// Fully resolved settings of an analysis run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub format: InputFormat,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub delta: usize,
    pub alpha: f64,
    pub ar_order: usize,
    pub aggregate: Aggregate,
    pub out: PathBuf,
    pub theta: Option<f64>,
}

impl PipelineConfig {
    /// Defaults for everything except the input path.
    pub fn new(input: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            format: InputFormat::default(),
            from: None,
            to: None,
            delta: DEFAULT_DELTA,
            alpha: DEFAULT_ALPHA,
            ar_order: DEFAULT_AR_ORDER,
            aggregate: Aggregate::default(),
            out: PathBuf::from(DEFAULT_OUT),
            theta: None,
        }
    }

    /// Merges `cli` over the optional config file over the defaults.
    pub fn resolve(cli: Overrides, file: Option<&Path>) -> Result<Self> {
        let merged = match file {
            Some(path) => cli.or(load_file(path)?),
            None => cli,
        };
        let input = merged
            .input
            .ok_or_else(|| CliError::Config("no input file given (use --input or `input` in the config file)".into()))?;
        let defaults = Self::new(input);
        let config = Self {
            format: merged.format.unwrap_or(defaults.format),
            from: merged.from,
            to: merged.to,
            delta: merged.delta.unwrap_or(defaults.delta),
            alpha: merged.alpha.unwrap_or(defaults.alpha),
            ar_order: merged.ar_order.unwrap_or(defaults.ar_order),
            aggregate: merged.aggregate.unwrap_or(defaults.aggregate),
            out: merged.out.unwrap_or(defaults.out.clone()),
            theta: merged.theta,
            input: defaults.input,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delta < 2 {
            return Err(CliError::Config(format!("delta must be at least 2, got {}", self.delta)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some(theta) = self.theta {
            if !(theta.is_finite() && theta >= 0.0) {
                return Err(CliError::Config(format!("theta must be finite and non-negative, got {theta}")));
            }
        }
        if let (Some(from), Some(to)) = (self.from, self.to) {
            if from > to {
                return Err(CliError::Config(format!("--from {from} is after --to {to}")));
            }
        }
        Ok(())
    }
}

fn load_file(path: &Path) -> Result<Overrides> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
