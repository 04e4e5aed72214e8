// SPDX-License-Identifier: MIT OR Apache-2.0

//! Three-class synthetic panel and the strict-purity benchmark.
//!
//! Every class mean is piecewise `β1 + β2 Φ(β3 + β4 t)` over absolute time
//! `t = 1..=T`:
//!
//! | class | segments |
//! |-------|----------|
//! | 1 | `(0, 10, -4, -0.05)` on `[1, T]` |
//! | 2 | `0` on `[1, ⌊T/3⌋]`, then `(0, 20, -3, 0.03)` |
//! | 3 | `0` on `[1, ⌊2T/3⌋]`, then `(0, 5, -2, 0.07)` |
//!
//! Each region adds its own i.i.d. `N(0, σ²)` noise.
//!
//! # Random streams
//!
//! All draws come from ChaCha20 seeded with `seed`. Replication `r` uses
//! stream `r << 32` to shuffle the class labels and stream
//! `(r << 32) | (j + 1)` for the noise of region `j`, so replications and
//! regions can be generated in any order or in parallel with identical output.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::clustering::{bic_threshold_select, purity, strict_purity, Clustering, Threshold};
use crate::error::{CsasError, Result};
use crate::graph::build_hamiltonian_path;
use crate::series::{CurveSeries, SeriesPanel};
use crate::stats::standard_normal_cdf;

/// One replication cell of the benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationConfig {
    pub series_length: usize,
    pub class_sizes: [usize; 3],
    pub sigma: f64,
    pub replications: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            series_length: 150,
            class_sizes: [20, 20, 20],
            sigma: 0.1,
            replications: 100,
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |name, reason| Err(CsasError::InvalidParameter { name, reason });
        if self.series_length < 30 {
            return fail("series_length", "series must have at least 30 points");
        }
        if self.class_sizes.contains(&0) {
            return fail("class_sizes", "every class needs at least one region");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return fail("sigma", "noise level must be positive and finite");
        }
        if self.replications == 0 {
            return fail("replications", "at least one replication is required");
        }
        if self.replications > u32::MAX as usize || self.num_regions() >= u32::MAX as usize {
            return fail("replications", "too many replications or regions for the stream layout");
        }
        Ok(())
    }

    pub fn num_regions(&self) -> usize {
        self.class_sizes.iter().sum()
    }
}

/// `β1 + β2 Φ(β3 + β4 t)` on the inclusive range `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassSegment {
    pub start: usize,
    pub end: usize,
    pub beta: [f64; 4],
}

/// Noiseless mean of one class as segments tiling `[1, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSpec {
    pub segments: Vec<ClassSegment>,
}

impl ClassSpec {
    pub fn mean_at(&self, t: usize) -> f64 {
        self.segments
            .iter()
            .find(|s| s.start <= t && t <= s.end)
            .map_or(0.0, |s| {
                let [b1, b2, b3, b4] = s.beta;
                b1 + b2 * standard_normal_cdf(b3 + b4 * t as f64)
            })
    }

    pub fn mean_curve(&self, series_length: usize) -> Vec<f64> {
        (1..=series_length).map(|t| self.mean_at(t)).collect()
    }

    /// Internal segment boundaries (last index of each segment but the final one).
    pub fn change_points(&self) -> Vec<usize> {
        self.segments[..self.segments.len().saturating_sub(1)]
            .iter()
            .map(|s| s.end)
            .collect()
    }
}

/// The three class means for series length `t_len`.
pub fn class_specs(t_len: usize) -> [ClassSpec; 3] {
    let zero = [0.0; 4];
    let two_part = |cut: usize, beta: [f64; 4]| ClassSpec {
        segments: alloc::vec![
            ClassSegment { start: 1, end: cut, beta: zero },
            ClassSegment { start: cut + 1, end: t_len, beta },
        ],
    };
    [
        ClassSpec {
            segments: alloc::vec![ClassSegment {
                start: 1,
                end: t_len,
                beta: [0.0, 10.0, -4.0, -0.05],
            }],
        },
        two_part(t_len / 3, [0.0, 20.0, -3.0, 0.03]),
        two_part(2 * t_len / 3, [0.0, 5.0, -2.0, 0.07]),
    ]
}

fn stream_rng(seed: u64, replication: usize, lane: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((replication as u64) << 32) | lane as u64);
    rng
}

/// Adds region `region`'s noise for `replication` to `mean`.
pub fn noisy_curve(mean: &[f64], sigma: f64, seed: u64, replication: usize, region: usize) -> Vec<f64> {
    let mut rng = stream_rng(seed, replication, region + 1);
    mean.iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(&mut rng);
            m + sigma * e
        })
        .collect()
}

/// Generates replication `replication` of `config`. Regions are named
/// `r1, r2, ...` and carry class labels `1..=3` in shuffled order.
pub fn generate_panel(config: &SimulationConfig, replication: usize) -> Result<SeriesPanel> {
    config.validate()?;
    let specs = class_specs(config.series_length);
    let means: Vec<Vec<f64>> = specs.iter().map(|s| s.mean_curve(config.series_length)).collect();

    let mut labels: Vec<usize> = config
        .class_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &n)| core::iter::repeat(c + 1).take(n))
        .collect();
    labels.shuffle(&mut stream_rng(config.seed, replication, 0));

    let series = labels
        .iter()
        .enumerate()
        .map(|(j, &class)| {
            let values = noisy_curve(&means[class - 1], config.sigma, config.seed, replication, j);
            CurveSeries::new(format!("r{}", j + 1), values).map(|s| s.with_class(class))
        })
        .collect::<Result<Vec<_>>>()?;
    SeriesPanel::new(series)
}

/// Scores of one clustered replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicationOutcome {
    pub strict_purity: f64,
    pub purity: f64,
    pub num_clusters: usize,
}

/// Generate, cluster by BIC threshold selection and score one replication.
pub fn run_replication(config: &SimulationConfig, replication: usize) -> Result<ReplicationOutcome> {
    let panel = generate_panel(config, replication)?;
    let truth = Clustering::from_labels(
        &panel.class_labels().unwrap_or_default(),
        Threshold::GroundTruth,
    );
    let path = build_hamiltonian_path(&panel)?;
    let found = bic_threshold_select(&path)?.clustering;
    Ok(ReplicationOutcome {
        strict_purity: strict_purity(&found, &truth)?,
        purity: purity(&found, &truth)?,
        num_clusters: found.num_clusters(),
    })
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkRow {
    pub sigma: f64,
    pub class_sizes: [usize; 3],
    pub mean_strict_purity: f64,
    pub mean_purity: f64,
    pub mean_clusters: f64,
    pub replications: usize,
    pub seed: u64,
}

impl BenchmarkRow {
    pub const CSV_HEADER: &'static str = "sigma,n1,n2,n3,mean_strict_purity,mean_purity,mean_L,reps,seed";

    pub fn to_csv_line(&self) -> alloc::string::String {
        let [n1, n2, n3] = self.class_sizes;
        format!(
            "{},{n1},{n2},{n3},{},{},{},{},{}",
            self.sigma, self.mean_strict_purity, self.mean_purity, self.mean_clusters, self.replications, self.seed
        )
    }
}

/// Averages replication outcomes into a table row.
pub fn summarize(config: &SimulationConfig, outcomes: &[ReplicationOutcome]) -> BenchmarkRow {
    let n = outcomes.len().max(1) as f64;
    let mean = |f: fn(&ReplicationOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
    BenchmarkRow {
        sigma: config.sigma,
        class_sizes: config.class_sizes,
        mean_strict_purity: mean(|o| o.strict_purity),
        mean_purity: mean(|o| o.purity),
        mean_clusters: mean(|o| o.num_clusters as f64),
        replications: outcomes.len(),
        seed: config.seed,
    }
}

/// Runs every cell of `grid` sequentially.
pub fn run_purity_benchmark(grid: &[SimulationConfig]) -> Result<Vec<BenchmarkRow>> {
    grid.iter()
        .map(|config| {
            let outcomes = (0..config.replications)
                .map(|r| run_replication(config, r))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(config, &outcomes))
        })
        .collect()
}
