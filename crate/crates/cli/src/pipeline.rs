// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cluster → aggregate → segment → fit orchestration.
//!
//! Ingestion and clustering run on the calling thread. Segmentation and
//! fitting run once per cluster on a rayon pool whose size is taken from
//! `CSAS_THREADS`; results are gathered in cluster order, so output never
//! depends on scheduling.

use std::collections::HashMap;

use csas_core::clustering::{bic_threshold_select, purity, strict_purity, Clustering, Threshold, TraceEntry};
use csas_core::fitting::{delta_method_band, ConfidenceBand, FitDiagnostics, ModelSpec, SegmentModel};
use csas_core::graph::{build_hamiltonian_path, prune_and_components, HamiltonianPath};
use csas_core::segmentation::{ChangePointSet, Segmenter};
use csas_core::series::{log1p_transform, SeriesPanel};
use rayon::prelude::*;

use crate::config::{Aggregate, PipelineConfig};
use crate::error::{CliError, Result};
use crate::ingest::Dataset;

pub const THREADS_ENV: &str = "CSAS_THREADS";

/// How far a run goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Cluster,
    Segment,
    Pipeline,
}

/// How the partition was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterMethod {
    /// BIC threshold selection over the path edge weights.
    Bic,
    /// Pruning at a user-supplied threshold.
    FixedTheta,
    /// Too few regions to select a threshold: everything in one cluster.
    Single,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterStage {
    pub clustering: Clustering,
    pub method: ClusterMethod,
    pub theta: Option<f64>,
    pub path: Option<HamiltonianPath>,
    pub trace: Vec<TraceEntry>,
}

/// Agreement with externally supplied class labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub purity: f64,
    pub strict_purity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub model: SegmentModel,
    pub diagnostics: FitDiagnostics,
    /// `None` when the covariance of the estimates is unavailable.
    pub band: Option<ConfidenceBand>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// 1-based cluster id.
    pub id: usize,
    pub members: Vec<usize>,
    /// Aggregated `log(1 + y)` curve that was segmented.
    pub z: Vec<f64>,
    pub change_points: Option<ChangePointSet>,
    pub fits: Vec<SegmentFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub stage: &'static str,
    pub dataset: Dataset,
    pub clustering: Option<ClusterStage>,
    pub evaluation: Option<Evaluation>,
    pub clusters: Vec<ClusterResult>,
}

/// `log(1 + y)` of every region.
pub fn transform(dataset: &Dataset) -> Result<SeriesPanel> {
    let curves = dataset
        .series
        .iter()
        .map(|s| log1p_transform(s).map_err(|e| CliError::Input(format!("region {:?}: {e}", s.region_id))))
        .collect::<Result<Vec<_>>>()?;
    SeriesPanel::new(curves).map_err(|e| CliError::Input(e.to_string()))
}

/// Partitions the regions. A fixed `theta` prunes the path directly;
/// otherwise the threshold is chosen by BIC, which needs at least three
/// regions. Smaller panels form a single cluster.
pub fn cluster_panel(panel: &SeriesPanel, theta: Option<f64>) -> Result<ClusterStage> {
    let k = panel.num_regions();
    if k < 2 {
        return Ok(ClusterStage {
            clustering: Clustering::single(k, Threshold::GroundTruth),
            method: ClusterMethod::Single,
            theta: None,
            path: None,
            trace: Vec::new(),
        });
    }
    let path = build_hamiltonian_path(panel).map_err(|e| CliError::numerical("clustering", e))?;
    let stage = match theta {
        Some(theta) => ClusterStage {
            clustering: prune_and_components(&path, theta).map_err(|e| CliError::numerical("clustering", e))?,
            method: ClusterMethod::FixedTheta,
            theta: Some(theta),
            path: Some(path),
            trace: Vec::new(),
        },
        None if k < 3 => ClusterStage {
            clustering: Clustering::single(k, Threshold::GroundTruth),
            method: ClusterMethod::Single,
            theta: None,
            path: Some(path),
            trace: Vec::new(),
        },
        None => {
            let selection = bic_threshold_select(&path).map_err(|e| CliError::numerical("clustering", e))?;
            ClusterStage {
                clustering: selection.clustering,
                method: ClusterMethod::Bic,
                theta: Some(selection.theta),
                path: Some(path),
                trace: selection.trace,
            }
        }
    };
    Ok(stage)
}

/// Scores `found` against per-region class labels.
pub fn evaluate(dataset: &Dataset, found: &Clustering, labels: &HashMap<String, String>) -> Result<Evaluation> {
    let truth: Vec<&str> = dataset
        .series
        .iter()
        .map(|s| {
            labels
                .get(&s.region_id)
                .map(String::as_str)
                .ok_or_else(|| CliError::Input(format!("no class label for region {:?}", s.region_id)))
        })
        .collect::<Result<_>>()?;
    let truth = Clustering::from_labels(&truth, Threshold::GroundTruth);
    let score = |f: fn(&Clustering, &Clustering) -> csas_core::Result<f64>| {
        f(found, &truth).map_err(|e| CliError::numerical("evaluation", e))
    };
    Ok(Evaluation {
        purity: score(purity)?,
        strict_purity: score(strict_purity)?,
    })
}

/// The single curve representing `members`.
pub fn aggregate(dataset: &Dataset, panel: &SeriesPanel, members: &[usize], mode: Aggregate) -> Result<Vec<f64>> {
    match mode {
        Aggregate::MeanLog => Ok(panel.mean_curve(members)),
        Aggregate::PooledCount => (0..dataset.series_length())
            .map(|t| {
                members
                    .iter()
                    .try_fold(0i64, |acc, &j| acc.checked_add(dataset.series[j].counts[t]))
                    .map(|total| (total as f64).ln_1p())
                    .ok_or_else(|| CliError::Input(format!("pooled count overflows at t = {}", t + 1)))
            })
            .collect(),
    }
}

/// Fits every segment of `change_points` and its confidence band.
pub fn fit_segments(
    z: &[f64],
    change_points: &ChangePointSet,
    spec: ModelSpec,
    alpha: f64,
    cluster: usize,
) -> Result<Vec<SegmentFit>> {
    change_points
        .segments()
        .into_iter()
        .map(|(a, b)| {
            let fail = |source| CliError::Numerical {
                stage: "fitting",
                cluster: Some(cluster),
                window: Some((a, b)),
                source,
            };
            let (model, diagnostics) = spec.fit(z, a, b).map_err(fail)?;
            let band = match delta_method_band(&model, z, a, b, alpha) {
                Ok(band) => Some(band),
                Err(csas_core::CsasError::CovarianceUnavailable) => None,
                Err(e) => return Err(fail(e)),
            };
            Ok(SegmentFit {
                model,
                diagnostics,
                band,
            })
        })
        .collect()
}

/// Worker pool sized by `CSAS_THREADS` (unset or 0: rayon's default).
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))
}

fn segment_cluster(z: &[f64], segmenter: &Segmenter, cluster: usize) -> Result<ChangePointSet> {
    segmenter.detect(z).map_err(|source| CliError::Numerical {
        stage: "segmentation",
        cluster: Some(cluster),
        window: Some((1, z.len())),
        source,
    })
}

/// Runs the analysis on an ingested panel up to `stage`.
pub fn run_stages(
    dataset: Dataset,
    config: &PipelineConfig,
    stage: Stage,
    labels: Option<&HashMap<String, String>>,
) -> Result<PipelineResult> {
    config.validate()?;
    let panel = transform(&dataset)?;
    let clustering = cluster_panel(&panel, config.theta)?;
    let evaluation = labels
        .map(|l| evaluate(&dataset, &clustering.clustering, l))
        .transpose()?;

    let t_len = dataset.series_length();
    if stage != Stage::Cluster && t_len <= config.delta {
        return Err(CliError::Input(format!(
            "series has {t_len} days; change-point search needs more than delta = {}",
            config.delta
        )));
    }
    let spec = ModelSpec::new(config.ar_order);
    let segmenter = Segmenter::new(config.delta, spec).map_err(|e| CliError::Config(e.to_string()))?;

    let groups = clustering.clustering.members();
    let work = |(i, members): (usize, &Vec<usize>)| -> Result<ClusterResult> {
        let id = i + 1;
        let z = aggregate(&dataset, &panel, members, config.aggregate)?;
        let (change_points, fits) = match stage {
            Stage::Cluster => (None, Vec::new()),
            Stage::Segment => (Some(segment_cluster(&z, &segmenter, id)?), Vec::new()),
            Stage::Pipeline => {
                let cps = segment_cluster(&z, &segmenter, id)?;
                let fits = fit_segments(&z, &cps, spec, config.alpha, id)?;
                (Some(cps), fits)
            }
        };
        Ok(ClusterResult {
            id,
            members: members.clone(),
            z,
            change_points,
            fits,
        })
    };
    let clusters = if stage == Stage::Cluster {
        groups.iter().enumerate().map(work).collect::<Result<Vec<_>>>()?
    } else {
        let pool = thread_pool()?;
        pool.install(|| groups.par_iter().enumerate().map(work).collect::<Vec<_>>())
            .into_iter()
            .collect::<Result<Vec<_>>>()?
    };

    Ok(PipelineResult {
        stage: match stage {
            Stage::Cluster => "cluster",
            Stage::Segment => "segment",
            Stage::Pipeline => "pipeline",
        },
        dataset,
        clustering: Some(clustering),
        evaluation,
        clusters,
    })
}

/// Fits the aggregate of `regions` (all regions when empty) with change
/// points given by the caller. A change point `c` ends a segment at `c`.
pub fn run_fit(dataset: Dataset, config: &PipelineConfig, regions: &[String], breaks: &[usize]) -> Result<PipelineResult> {
    config.validate()?;
    let t_len = dataset.series_length();
    let members: Vec<usize> = if regions.is_empty() {
        (0..dataset.num_regions()).collect()
    } else {
        regions
            .iter()
            .map(|r| {
                dataset
                    .region_index(r)
                    .ok_or_else(|| CliError::Config(format!("unknown region {r:?}")))
            })
            .collect::<Result<_>>()?
    };
    if breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("--breaks must be strictly increasing".into()));
    }
    if let Some(&bad) = breaks.iter().find(|&&c| c < 1 || c >= t_len) {
        return Err(CliError::Config(format!("break {bad} lies outside 1..{t_len}")));
    }
    let panel = transform(&dataset)?;
    let z = aggregate(&dataset, &panel, &members, config.aggregate)?;
    let cps = ChangePointSet::new(breaks.to_vec(), config.delta, t_len);
    let fits = fit_segments(&z, &cps, ModelSpec::new(config.ar_order), config.alpha, 1)?;
    Ok(PipelineResult {
        stage: "fit",
        dataset,
        clustering: None,
        evaluation: None,
        clusters: vec![ClusterResult {
            id: 1,
            members,
            z,
            change_points: Some(cps),
            fits,
        }],
    })
}
