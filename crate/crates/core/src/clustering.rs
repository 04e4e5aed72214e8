// SPDX-License-Identifier: MIT OR Apache-2.0

//! Partitions of regions, threshold selection and purity scores.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CsasError, Result};
use crate::graph::{components_at, HamiltonianPath};
use crate::stats::{median, median_abs_deviation, sample_variance};

/// Where a partition came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Connected components of the path pruned at this distance.
    Value(f64),
    /// Known class membership (simulation or an external labelling).
    GroundTruth,
}

/// A partition of `K` regions into `L` nonempty clusters numbered `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    assignment: Vec<usize>,
    num_clusters: usize,
    threshold: Threshold,
}

impl Clustering {
    /// Relabels arbitrary per-region labels to `1..=L` in order of first
    /// appearance.
    pub fn from_labels<T: PartialEq + Copy>(labels: &[T], threshold: Threshold) -> Self {
        let mut seen: Vec<T> = Vec::new();
        let assignment = labels
            .iter()
            .map(|l| match seen.iter().position(|s| s == l) {
                Some(i) => i + 1,
                None => {
                    seen.push(*l);
                    seen.len()
                }
            })
            .collect();
        Self {
            assignment,
            num_clusters: seen.len(),
            threshold,
        }
    }

    /// Everyone in one cluster.
    pub fn single(k: usize, threshold: Threshold) -> Self {
        Self {
            assignment: vec![1; k],
            num_clusters: usize::from(k > 0),
            threshold,
        }
    }

    /// Cluster id (1-based) of each region.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_regions(&self) -> usize {
        self.assignment.len()
    }

    pub fn threshold(&self) -> Threshold {
        self.threshold
    }

    /// Region indices of every cluster, cluster `l` at position `l - 1`.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (j, &c) in self.assignment.iter().enumerate() {
            out[c - 1].push(j);
        }
        out
    }

    /// True when every cluster of `self` lies inside a single cluster of
    /// `coarser`.
    pub fn refines(&self, coarser: &Clustering) -> bool {
        if self.num_regions() != coarser.num_regions() {
            return false;
        }
        let mut parent = vec![0usize; self.num_clusters];
        for (a, b) in self.assignment.iter().zip(&coarser.assignment) {
            let slot = &mut parent[a - 1];
            if *slot == 0 {
                *slot = *b;
            } else if *slot != *b {
                return false;
            }
        }
        true
    }
}

fn contingency(found: &Clustering, truth: &Clustering) -> Result<Vec<Vec<usize>>> {
    if found.num_regions() != truth.num_regions() {
        return Err(CsasError::UniverseMismatch {
            left: found.num_regions(),
            right: truth.num_regions(),
        });
    }
    if found.num_regions() == 0 {
        return Err(CsasError::TooFewRegions { needed: 1, found: 0 });
    }
    let mut table = vec![vec![0usize; truth.num_clusters]; found.num_clusters];
    for (a, c) in found.assignment.iter().zip(&truth.assignment) {
        table[a - 1][c - 1] += 1;
    }
    Ok(table)
}

/// `(1/K) sum_l max_i |A_l ∩ C_i|`.
pub fn purity(found: &Clustering, truth: &Clustering) -> Result<f64> {
    let table = contingency(found, truth)?;
    let hits: usize = table.iter().map(|row| row.iter().copied().max().unwrap_or(0)).sum();
    Ok(hits as f64 / found.num_regions() as f64)
}

/// Purity minus `|L - N| / max(L, N)`.
pub fn strict_purity(found: &Clustering, truth: &Clustering) -> Result<f64> {
    let p = purity(found, truth)?;
    let (l, n) = (found.num_clusters, truth.num_clusters);
    Ok(p - l.abs_diff(n) as f64 / l.max(n) as f64)
}

/// `median(x) + 2.5 * 1.483 * MAD(x)` over the path edge weights.
pub fn naive_threshold(path: &HamiltonianPath) -> Result<f64> {
    let x = path.edge_weights();
    if x.len() < 2 {
        return Err(CsasError::TooFewEdges { needed: 2, found: x.len() });
    }
    Ok(median(x) + 2.5 * (1.483 * median_abs_deviation(x)))
}

/// Floor applied to the edge-weight variance before taking its logarithm.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub theta: f64,
    /// `None` when fewer than two edge weights survive.
    pub bic: Option<f64>,
    pub num_clusters: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSelection {
    pub clustering: Clustering,
    pub theta: f64,
    pub trace: Vec<TraceEntry>,
}

/// BIC-driven descent through the distinct path edge weights.
///
/// Starting from one all-inclusive cluster at the largest weight, the
/// threshold is lowered to the next largest distinct weight while
/// `(K-1) log var(x(θ)) + 2 L log(K-1)` strictly decreases. The threshold
/// never goes below the `(K-2)`-th largest weight.
pub fn bic_threshold_select(path: &HamiltonianPath) -> Result<ThresholdSelection> {
    let k = path.num_vertices();
    if k < 3 {
        return Err(CsasError::TooFewRegions { needed: 3, found: k });
    }
    let x = path.edge_weights();
    let mut levels: Vec<f64> = x.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();

    let m = (k - 1) as f64;
    let bic_at = |theta: f64, clusters: usize| -> Option<f64> {
        let kept: Vec<f64> = x.iter().copied().filter(|&w| w <= theta).collect();
        let var = sample_variance(&kept)?;
        Some(m * libm::log(var.max(VARIANCE_FLOOR)) + 2.0 * clusters as f64 * libm::log(m))
    };

    let mut theta = levels[0];
    let mut clustering = components_at(path, theta);
    let mut best = bic_at(theta, clustering.num_clusters());
    let mut trace = vec![TraceEntry {
        theta,
        bic: best,
        num_clusters: clustering.num_clusters(),
        accepted: true,
    }];

    // s runs over 2 <= s < K - 1 (1-based ranks).
    for &candidate in levels.iter().take(k - 2).skip(1) {
        let temp = components_at(path, candidate);
        let bic = bic_at(candidate, temp.num_clusters());
        let improves = match (bic, best) {
            (Some(b), Some(prev)) => b < prev,
            _ => false,
        };
        trace.push(TraceEntry {
            theta: candidate,
            bic,
            num_clusters: temp.num_clusters(),
            accepted: improves,
        });
        if !improves {
            break;
        }
        theta = candidate;
        clustering = temp;
        best = bic;
    }
    Ok(ThresholdSelection {
        clustering,
        theta,
        trace,
    })
}
