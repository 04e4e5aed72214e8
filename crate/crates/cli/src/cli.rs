// SPDX-License-Identifier: MIT OR Apache-2.0

//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use csas_core::simulation::SimulationConfig;

use crate::bench::{benchmark_csv, run_benchmark, simulate_files};
use crate::config::{Overrides, PipelineConfig};
use crate::error::{exit, CliError, Result};
use crate::ingest::{ingest_reader, read_labels, DateRange};
use crate::pipeline::{run_fit, run_stages, thread_pool, PipelineResult, Stage};
use crate::report::{build_report, generated_at, sha256_hex, write_outputs};

#[derive(Debug, Parser)]
#[command(name = "csas", version, about = "Cluster, segment and fit regional count curves")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition regions by curve similarity.
    Cluster(AnalysisArgs),
    /// Cluster, then detect change points in every cluster.
    Segment(AnalysisArgs),
    /// Fit one series (or the aggregate of several regions) with given change points.
    Fit(FitArgs),
    /// Cluster, detect change points, fit every segment and compute bands.
    Pipeline(AnalysisArgs),
    /// Write a simulated three-class panel.
    Simulate(SimulateArgs),
    /// Clustering purity over a grid of noise levels.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// Flat TOML file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// `region,class` file; adds purity scores to the clustering output.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Region to fit; repeat to pool several. Default: all regions.
    #[arg(long = "region")]
    pub regions: Vec<String>,
    /// Comma-separated change points; a point `c` ends a segment on day `c`.
    #[arg(long, value_delimiter = ',')]
    pub breaks: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.1)]
    pub sigma: f64,
    /// Days per series.
    #[arg(long, default_value_t = 150)]
    pub length: usize,
    /// Regions per class, `n1,n2,n3`.
    #[arg(long, value_delimiter = ',', default_values_t = [20, 20, 20])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub replication: usize,
    /// Output directory; receives `panel.csv` and `labels.csv`.
    #[arg(long, default_value = "csas-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise levels, comma-separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0])]
    pub sigmas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [20, 20, 20])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 150)]
    pub length: usize,
    #[arg(long, default_value_t = 100)]
    pub reps: usize,
    /// Output directory; receives `benchmark.csv`.
    #[arg(long, default_value = "csas-out")]
    pub out: PathBuf,
}

fn sizes(v: &[usize]) -> Result<[usize; 3]> {
    v.try_into()
        .map_err(|_| CliError::Config(format!("--sizes needs three values, got {}", v.len())))
}

/// Reads and ingests the configured input, returning its bytes' digest too.
fn load(config: &PipelineConfig) -> Result<(crate::ingest::Dataset, String)> {
    let bytes = std::fs::read(&config.input).map_err(|source| CliError::Read {
        path: config.input.clone(),
        source,
    })?;
    let range = DateRange {
        from: config.from,
        to: config.to,
    };
    let dataset = ingest_reader(bytes.as_slice(), config.format, range)?;
    Ok((dataset, sha256_hex(&bytes)))
}

fn finish(result: &PipelineResult, config: &PipelineConfig, digest: String) -> Result<()> {
    let report = build_report(result, config, digest, generated_at()?);
    for path in write_outputs(&config.out, &report, result)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn analysis(args: AnalysisArgs, stage: Stage) -> Result<()> {
    let config = PipelineConfig::resolve(args.overrides, args.config.as_deref())?;
    let labels = args.labels.as_deref().map(read_labels).transpose()?;
    let (dataset, digest) = load(&config)?;
    let result = run_stages(dataset, &config, stage, labels.as_ref())?;
    finish(&result, &config, digest)
}

fn fit(args: FitArgs) -> Result<()> {
    let config = PipelineConfig::resolve(args.overrides, args.config.as_deref())?;
    let (dataset, digest) = load(&config)?;
    let result = run_fit(dataset, &config, &args.regions, &args.breaks)?;
    finish(&result, &config, digest)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::write(&path, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let config = SimulationConfig {
        series_length: args.length,
        class_sizes: sizes(&args.sizes)?,
        sigma: args.sigma,
        replications: args.replication + 1,
        seed: args.seed,
    };
    let files = simulate_files(&config, args.replication)?;
    write_file(&args.out, "panel.csv", &files.counts_csv)?;
    write_file(&args.out, "labels.csv", &files.labels_csv)
}

fn benchmark(args: BenchmarkArgs) -> Result<()> {
    let class_sizes = sizes(&args.sizes)?;
    let grid: Vec<SimulationConfig> = args
        .sigmas
        .iter()
        .map(|&sigma| SimulationConfig {
            series_length: args.length,
            class_sizes,
            sigma,
            replications: args.reps,
            seed: args.seed,
        })
        .collect();
    let rows = thread_pool()?.install(|| run_benchmark(&grid))?;
    for r in &rows {
        eprintln!(
            "sigma {}: mean strict purity {:.4}, {:.1} ms per replication",
            r.row.sigma,
            r.row.mean_strict_purity,
            r.per_replication().as_secs_f64() * 1e3
        );
    }
    write_file(&args.out, "benchmark.csv", &benchmark_csv(&rows))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Cluster(a) => analysis(a, Stage::Cluster),
        Command::Segment(a) => analysis(a, Stage::Segment),
        Command::Pipeline(a) => analysis(a, Stage::Pipeline),
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Benchmark(a) => benchmark(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("csas: {e}");
            e.exit_code()
        }
    }
}
