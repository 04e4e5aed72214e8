// SPDX-License-Identifier: MIT OR Apache-2.0

//! `result.json` and per-cluster plot-data CSV.
//!
//! JSON floats use the shortest representation that round-trips, so
//! persisted estimates reproduce fitted values exactly.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::{CliError, Result};
use crate::pipeline::{ClusterMethod, ClusterResult, PipelineResult, SegmentFit};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const RESULT_FILE: &str = "result.json";
pub const PLOT_HEADER: [&str; 6] = ["t", "observed", "fitted", "ci_lo", "ci_hi", "segment_id"];

/// Schema of `result.json`, also shipped as `schema/result.schema.json`.
pub const RESULT_SCHEMA: &str = include_str!("../../../schema/result.schema.json");

/// Reproducible-build convention for pinning timestamps.
pub const EPOCH_ENV: &str = "SOURCE_DATE_EPOCH";

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub stage: &'static str,
    pub provenance: Provenance,
    pub input: InputSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering: Option<ClusteringReport>,
    pub clusters: Vec<ClusterReport>,
}

#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub generated_at: String,
    pub config: PipelineConfig,
    pub input_sha256: String,
}

#[derive(Debug, Serialize)]
pub struct InputSummary {
    pub num_regions: usize,
    pub series_length: usize,
    pub first_date: NaiveDate,
    pub last_date: NaiveDate,
    pub regions: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ClusteringReport {
    pub method: &'static str,
    pub theta: Option<f64>,
    pub num_clusters: usize,
    /// Cluster id of each region, in input order.
    pub assignment: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathReport>,
    pub trace: Vec<TraceReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvaluationReport>,
}

#[derive(Debug, Serialize)]
pub struct PathReport {
    pub order: Vec<String>,
    pub edge_weights: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TraceReport {
    pub theta: f64,
    pub bic: Option<f64>,
    pub num_clusters: usize,
    pub accepted: bool,
}

#[derive(Debug, Serialize)]
pub struct EvaluationReport {
    pub purity: f64,
    pub strict_purity: f64,
}

#[derive(Debug, Serialize)]
pub struct ClusterReport {
    pub id: usize,
    pub members: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub change_points: Option<Vec<ChangePointReport>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<SegmentReport>,
}

#[derive(Debug, Serialize)]
pub struct ChangePointReport {
    pub t: usize,
    pub date: NaiveDate,
}

#[derive(Debug, Serialize)]
pub struct SegmentReport {
    pub id: usize,
    pub t_start: usize,
    pub t_end: usize,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub n: usize,
    pub ar_order: usize,
    /// `β1..β4`, then one coefficient per lag.
    pub beta: Vec<f64>,
    pub covariance: Option<Vec<Vec<f64>>>,
    pub rss: f64,
    pub sigma2: f64,
    pub sigma2_mle: f64,
    pub t_statistics: Vec<Option<f64>>,
    pub p_values: Vec<Option<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub ridge_applied: bool,
    pub band: Option<BandReport>,
}

#[derive(Debug, Serialize)]
pub struct BandReport {
    pub alpha: f64,
    pub quantile: f64,
    pub df: f64,
}

/// `SOURCE_DATE_EPOCH` when set, the current time otherwise.
pub fn generated_at() -> Result<String> {
    let time = match std::env::var(EPOCH_ENV) {
        Ok(v) => {
            let secs: i64 = v
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{EPOCH_ENV} must be an integer, got {v:?}")))?;
            DateTime::from_timestamp(secs, 0)
                .ok_or_else(|| CliError::Config(format!("{EPOCH_ENV} out of range: {secs}")))?
        }
        Err(_) => Utc::now(),
    };
    Ok(time.to_rfc3339_opts(SecondsFormat::Secs, true))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn method_name(m: ClusterMethod) -> &'static str {
    match m {
        ClusterMethod::Bic => "bic",
        ClusterMethod::FixedTheta => "fixed-theta",
        ClusterMethod::Single => "single",
    }
}

fn segment_report(id: usize, fit: &SegmentFit, dates: &[NaiveDate]) -> SegmentReport {
    let m = &fit.model;
    let k = m.num_params();
    SegmentReport {
        id,
        t_start: m.t_minus,
        t_end: m.t_plus,
        start_date: dates[m.t_minus - 1],
        end_date: dates[m.t_plus - 1],
        n: m.n,
        ar_order: m.ar_order,
        beta: m.beta.clone(),
        covariance: m.covariance.as_ref().map(|c| c.chunks(k).map(<[f64]>::to_vec).collect()),
        rss: m.rss,
        sigma2: m.sigma2,
        sigma2_mle: m.sigma2_mle,
        t_statistics: fit.diagnostics.t_statistics.clone(),
        p_values: fit.diagnostics.p_values.clone(),
        converged: fit.diagnostics.converged,
        iterations: fit.diagnostics.iterations,
        ridge_applied: fit.diagnostics.ridge_applied,
        band: fit.band.as_ref().map(|b| BandReport {
            alpha: b.alpha,
            quantile: b.quantile,
            df: b.df,
        }),
    }
}

pub fn build_report(result: &PipelineResult, config: &PipelineConfig, input_sha256: String, generated_at: String) -> Report {
    let ds = &result.dataset;
    let names: Vec<String> = ds.series.iter().map(|s| s.region_id.clone()).collect();
    let clustering = result.clustering.as_ref().map(|c| ClusteringReport {
        method: method_name(c.method),
        theta: c.theta,
        num_clusters: c.clustering.num_clusters(),
        assignment: c.clustering.assignment().to_vec(),
        path: c.path.as_ref().map(|p| PathReport {
            order: p.order().iter().map(|&j| names[j].clone()).collect(),
            edge_weights: p.edge_weights().to_vec(),
        }),
        trace: c
            .trace
            .iter()
            .map(|e| TraceReport {
                theta: e.theta,
                bic: e.bic,
                num_clusters: e.num_clusters,
                accepted: e.accepted,
            })
            .collect(),
        evaluation: result.evaluation.map(|e| EvaluationReport {
            purity: e.purity,
            strict_purity: e.strict_purity,
        }),
    });
    let clusters = result
        .clusters
        .iter()
        .map(|c| ClusterReport {
            id: c.id,
            members: c.members.iter().map(|&j| names[j].clone()).collect(),
            change_points: c.change_points.as_ref().map(|cps| {
                cps.points()
                    .iter()
                    .map(|&t| ChangePointReport { t, date: ds.dates[t - 1] })
                    .collect()
            }),
            segments: c
                .fits
                .iter()
                .enumerate()
                .map(|(i, f)| segment_report(i + 1, f, &ds.dates))
                .collect(),
        })
        .collect();
    Report {
        schema_version: SCHEMA_VERSION,
        stage: result.stage,
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            generated_at,
            config: config.clone(),
            input_sha256,
        },
        input: InputSummary {
            num_regions: ds.num_regions(),
            series_length: ds.series_length(),
            first_date: ds.dates[0],
            last_date: ds.dates[ds.dates.len() - 1],
            regions: names,
        },
        clustering,
        clusters,
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

/// Plot rows of one fitted cluster. Days outside every fitted segment are
/// not produced (every day is covered once a cluster is fitted).
pub fn plot_rows(cluster: &ClusterResult) -> Vec<[String; 6]> {
    let mut rows = Vec::with_capacity(cluster.z.len());
    for (i, fit) in cluster.fits.iter().enumerate() {
        let m = &fit.model;
        for t in m.t_minus..=m.t_plus {
            let k = t - m.t_minus;
            let fitted = m.predict_at(&cluster.z, t);
            let (lo, hi) = match &fit.band {
                Some(b) => (b.center[k] - b.half_width[k], b.center[k] + b.half_width[k]),
                None => (f64::NAN, f64::NAN),
            };
            rows.push([
                t.to_string(),
                fmt_f64(cluster.z[t - 1]),
                fmt_f64(fitted),
                fmt_f64(lo),
                fmt_f64(hi),
                (i + 1).to_string(),
            ]);
        }
    }
    rows
}

pub fn plot_file_name(cluster_id: usize) -> String {
    format!("cluster_{cluster_id}_fit.csv")
}

pub fn report_json(report: &Report) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serialises");
    s.push('\n');
    s
}

/// Writes `result.json` and one plot CSV per fitted cluster; returns the
/// paths written.
pub fn write_outputs(dir: &Path, report: &Report, result: &PipelineResult) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    let mut written = Vec::new();
    let json_path = dir.join(RESULT_FILE);
    fs::write(&json_path, report_json(report)).map_err(|e| CliError::write(&json_path, e))?;
    written.push(json_path);
    for cluster in result.clusters.iter().filter(|c| !c.fits.is_empty()) {
        let path = dir.join(plot_file_name(cluster.id));
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::write(&path, e))?;
        w.write_record(PLOT_HEADER).map_err(|e| CliError::write(&path, e))?;
        for row in plot_rows(cluster) {
            w.write_record(&row).map_err(|e| CliError::write(&path, e))?;
        }
        w.flush().map_err(|e| CliError::write(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
