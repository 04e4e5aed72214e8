// SPDX-License-Identifier: MIT OR Apache-2.0

//! Clustering-segmented autoregressive sigmoid modelling of count curves.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! numerical pipeline:
//!
//! * [`series`]: count and log-count curve types, the `log(1 + y)` transform
//!   and the root-mean-square curve distance.
//! * [`graph`] and [`clustering`]: the greedy Kruskal-style approximate
//!   shortest Hamiltonian path, threshold pruning into connected components,
//!   BIC threshold selection, purity and strict purity.
//! * [`fitting`]: the stretched normal-CDF curve with autoregressive lags,
//!   grid-initialised Levenberg-Marquardt least squares, coefficient t-tests
//!   and delta-method confidence bands.
//! * [`segmentation`]: BIC-driven iterated change-point search.
//! * [`simulation`]: the three-class synthetic panel and purity benchmark.
//!
//! File formats, the command-line interface and thread pools live in the
//! companion `csas` crate.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod clustering;
pub mod error;
pub mod fitting;
pub mod graph;
pub mod linalg;
pub mod segmentation;
pub mod series;
pub mod simulation;
pub mod stats;

pub use clustering::{
    bic_threshold_select, naive_threshold, purity, strict_purity, Clustering, Threshold,
    ThresholdSelection, TraceEntry,
};
pub use error::{CsasError, Result};
pub use fitting::{
    coefficient_t_tests, delta_method_band, fit_segment, residual_sum_s0, residual_sum_s1,
    sigmoid_ar_predict, ConfidenceBand, FitDiagnostics, ModelSpec, SegmentModel,
};
pub use graph::{build_hamiltonian_path, prune_and_components, HamiltonianPath, WeightedEdge};
pub use segmentation::{
    detect_change_points, estimate_change_point, segment_bic, BicComparison, ChangePointSet,
    Segmenter,
};
pub use series::{curve_distance, log1p_transform, CountSeries, CurveSeries, SeriesPanel};
pub use simulation::{generate_panel, run_purity_benchmark, BenchmarkRow, SimulationConfig};
pub use stats::standard_normal_cdf;
