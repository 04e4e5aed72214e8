// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic panels and the clustering purity benchmark.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use csas_core::simulation::{generate_panel, run_replication, summarize, BenchmarkRow, SimulationConfig};
use rayon::prelude::*;

use crate::error::{CliError, Result};

/// Day 1 of every simulated panel.
pub fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

/// Simulated counts in wide layout plus the matching `region,class` labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFiles {
    pub counts_csv: String,
    pub labels_csv: String,
}

/// Renders replication `replication` of `config` as counts
/// `Y = max(0, round(exp(Z) - 1))`.
pub fn simulate_files(config: &SimulationConfig, replication: usize) -> Result<SimulatedFiles> {
    let panel = generate_panel(config, replication).map_err(|e| CliError::Config(e.to_string()))?;
    let series = panel.series();
    let mut counts_csv = String::from("date");
    for s in series {
        write!(counts_csv, ",{}", s.region_id).unwrap();
    }
    counts_csv.push('\n');
    for (t, date) in base_date().iter_days().take(panel.series_length()).enumerate() {
        write!(counts_csv, "{date}").unwrap();
        for s in series {
            let y = s.values[t].exp_m1().round().max(0.0);
            write!(counts_csv, ",{}", y as i64).unwrap();
        }
        counts_csv.push('\n');
    }
    let mut labels_csv = String::from("region,class\n");
    for s in series {
        writeln!(labels_csv, "{},{}", s.region_id, s.class_label.unwrap_or(0)).unwrap();
    }
    Ok(SimulatedFiles { counts_csv, labels_csv })
}

/// One benchmark cell with its wall-clock cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedRow {
    pub row: BenchmarkRow,
    pub elapsed: Duration,
}

impl TimedRow {
    pub fn per_replication(&self) -> Duration {
        self.elapsed / self.row.replications.max(1) as u32
    }
}

/// Runs every cell, replications in parallel on the current rayon pool.
/// Each replication owns its random streams, so results do not depend on
/// the number of threads.
pub fn run_benchmark(grid: &[SimulationConfig]) -> Result<Vec<TimedRow>> {
    grid.iter()
        .map(|config| {
            config.validate().map_err(|e| CliError::Config(e.to_string()))?;
            let start = Instant::now();
            let outcomes = (0..config.replications)
                .into_par_iter()
                .map(|r| run_replication(config, r))
                .collect::<csas_core::Result<Vec<_>>>()
                .map_err(|e| CliError::numerical("benchmark", e))?;
            Ok(TimedRow {
                row: summarize(config, &outcomes),
                elapsed: start.elapsed(),
            })
        })
        .collect()
}

pub fn benchmark_csv(rows: &[TimedRow]) -> String {
    let mut out = String::from(BenchmarkRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.row.to_csv_line());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulated_counts_parse_back() {
        let cfg = SimulationConfig {
            series_length: 30,
            class_sizes: [1, 1, 1],
            sigma: 0.2,
            replications: 1,
            seed: 3,
        };
        let files = simulate_files(&cfg, 0).unwrap();
        let lines: Vec<&str> = files.counts_csv.lines().collect();
        assert_eq!(lines[0], "date,r1,r2,r3");
        assert_eq!(lines.len(), 31);
        assert!(lines[1].starts_with("2020-01-01,"));
        assert_eq!(files.labels_csv.lines().count(), 4);
    }

    #[test]
    fn benchmark_matches_sequential_core() {
        let cfg = SimulationConfig {
            replications: 4,
            ..SimulationConfig::default()
        };
        let par = run_benchmark(&[cfg]).unwrap();
        let seq = csas_core::simulation::run_purity_benchmark(&[cfg]).unwrap();
        assert_eq!(par[0].row, seq[0]);
        assert!(benchmark_csv(&par).starts_with("sigma,n1,n2,n3,"));
    }
}
