// SPDX-License-Identifier: MIT OR Apache-2.0

//! BIC-driven iterated change-point search.
//!
//! A change point `c` ends a segment: the series splits into `[.., c]` and
//! `[c + 1, ..]`. All time indices are 1-based.
//!
//! For a window `[a, b]` the no-change model (one fit) is compared with the
//! best single split by
//!
//! ```text
//! BIC_ν = (b - a + 1) log(S_ν / (b - a + 1)) + k (ν + 1) log(b - a)
//! ```
//!
//! with `k` coefficients per segment. The search first narrows in on the
//! earliest and latest change points of the current window, records them and
//! recurses on the span between; a pruning pass then re-tests every recorded
//! point against its neighbours until nothing more is dropped.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CsasError, Result};
use crate::fitting::ModelSpec;

/// Floor on the per-window residual variance before its logarithm.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Default minimum distance between adjacent change points.
pub const DEFAULT_DELTA: usize = 10;

/// Sorted interior change points of a series of length `series_length`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangePointSet {
    points: Vec<usize>,
    delta: usize,
    series_length: usize,
}

impl ChangePointSet {
    pub fn new(mut points: Vec<usize>, delta: usize, series_length: usize) -> Self {
        points.sort_unstable();
        points.dedup();
        Self {
            points,
            delta,
            series_length,
        }
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn series_length(&self) -> usize {
        self.series_length
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of segments `M`.
    pub fn num_segments(&self) -> usize {
        self.points.len() + 1
    }

    /// Inclusive `(start, end)` of every segment.
    pub fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_segments());
        let mut start = 1;
        for &c in &self.points {
            out.push((start, c));
            start = c + 1;
        }
        out.push((start, self.series_length));
        out
    }

    /// Interior points, `delta` spacing and minimum boundary segment length.
    pub fn satisfies_invariants(&self, min_segment: usize) -> bool {
        let t = self.series_length;
        let interior = self.points.iter().all(|&c| c > 1 && c < t);
        let spaced = self.points.windows(2).all(|w| w[1] - w[0] >= self.delta);
        let bounded = match (self.points.first(), self.points.last()) {
            (Some(&first), Some(&last)) => first >= min_segment && t - last >= min_segment,
            _ => true,
        };
        interior && spaced && bounded
    }
}

/// Outcome of comparing the no-change and one-change models on a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BicComparison {
    pub t_minus: usize,
    pub t_plus: usize,
    pub t_hat: usize,
    pub s0: f64,
    pub s1: f64,
    pub bic0: f64,
    pub bic1: f64,
}

impl BicComparison {
    /// The split is at least as good as no split.
    pub fn favours_split(&self) -> bool {
        self.bic0 >= self.bic1
    }
}

/// `n log(max(σ², floor)) + k (ν + 1) log(t_plus - t_minus)`, `n = t_plus - t_minus + 1`.
pub fn bic_from_variance(t_minus: usize, t_plus: usize, sigma2: f64, nu: usize, num_params: usize) -> f64 {
    let n = (t_plus - t_minus + 1) as f64;
    let span = (t_plus - t_minus) as f64;
    n * libm::log(sigma2.max(VARIANCE_FLOOR)) + (num_params * (nu + 1)) as f64 * libm::log(span)
}

/// Change-point search configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segmenter {
    spec: ModelSpec,
    delta: usize,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self {
            spec: ModelSpec::default(),
            delta: DEFAULT_DELTA,
        }
    }
}

/// Residual sums memoised per `(start, end)` for one series.
#[derive(Default)]
struct FitCache {
    rss: BTreeMap<(usize, usize), f64>,
    windows: BTreeMap<(usize, usize), Option<BicComparison>>,
}

impl Segmenter {
    pub fn new(delta: usize, spec: ModelSpec) -> Result<Self> {
        if delta < 2 {
            return Err(CsasError::InvalidParameter {
                name: "delta",
                reason: "minimum change-point spacing must be at least 2",
            });
        }
        Ok(Self { spec, delta })
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    /// Minimum points per fitted sub-segment: `max(ceil(Δ/2) + 1, k + 1)`.
    pub fn min_segment(&self) -> usize {
        (self.delta.div_ceil(2) + 1).max(self.spec.min_points())
    }

    /// Split candidates `t0` for `[a, b]`: strictly inside `(a + Δ/2, b - Δ/2)`
    /// and leaving [`Self::min_segment`] points on each side. With `anchored`,
    /// a window edge that borders an existing change point additionally keeps
    /// `t0` at least `Δ` away from it.
    fn admissible(&self, a: usize, b: usize, len: usize, anchored: bool) -> Option<(usize, usize)> {
        let m = self.min_segment();
        let d = self.delta;
        let mut lo = ((2 * a + d) / 2 + 1).max(a + m - 1);
        let upper_eq9 = (2 * b).checked_sub(d + 1)? / 2;
        let mut hi = upper_eq9.min(b.checked_sub(m)?);
        if anchored {
            if a > 1 {
                lo = lo.max(a - 1 + d);
            }
            if b < len {
                hi = hi.min(b.checked_sub(d)?);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }

    fn segment_rss(&self, z: &[f64], a: usize, b: usize, cache: &mut FitCache) -> f64 {
        *cache
            .rss
            .entry((a, b))
            .or_insert_with(|| self.spec.fast_rss(z, a, b))
    }

    fn compare_in(&self, z: &[f64], a: usize, b: usize, lo: usize, hi: usize, cache: &mut FitCache) -> BicComparison {
        let s0 = self.segment_rss(z, a, b, cache);
        let mut best = (lo, f64::INFINITY);
        for t0 in lo..=hi {
            let s1 = self.segment_rss(z, a, t0, cache) + self.segment_rss(z, t0 + 1, b, cache);
            if s1 < best.1 {
                best = (t0, s1);
            }
        }
        let n = (b - a + 1) as f64;
        let k = self.spec.num_params();
        BicComparison {
            t_minus: a,
            t_plus: b,
            t_hat: best.0,
            s0,
            s1: best.1,
            bic0: bic_from_variance(a, b, s0 / n, 0, k),
            bic1: bic_from_variance(a, b, best.1 / n, 1, k),
        }
    }

    fn window(&self, z: &[f64], a: usize, b: usize, cache: &mut FitCache) -> Option<BicComparison> {
        if let Some(hit) = cache.windows.get(&(a, b)) {
            return *hit;
        }
        let result = self
            .admissible(a, b, z.len(), true)
            .map(|(lo, hi)| self.compare_in(z, a, b, lo, hi, cache));
        cache.windows.insert((a, b), result);
        result
    }

    fn split(&self, z: &[f64], a: usize, b: usize, cache: &mut FitCache) -> Option<usize> {
        self.window(z, a, b, cache)
            .filter(BicComparison::favours_split)
            .map(|c| c.t_hat)
    }

    fn check_window(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<()> {
        if t_minus < 1 || t_plus > z.len() || t_minus >= t_plus {
            return Err(CsasError::InvalidWindow {
                t_minus,
                t_plus,
                len: z.len(),
            });
        }
        if let Some(index) = z.iter().position(|v| !v.is_finite()) {
            return Err(CsasError::NonFinite { what: "curve value", index });
        }
        Ok(())
    }

    /// `argmin_{t0} S1(t_minus, t0, t_plus)` over the admissible range, ties to
    /// the smallest `t0`.
    pub fn estimate_change_point(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<usize> {
        Ok(self.compare(z, t_minus, t_plus)?.t_hat)
    }

    /// No-change versus best-split BIC on a window.
    pub fn compare(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<BicComparison> {
        self.check_window(z, t_minus, t_plus)?;
        let (lo, hi) = self
            .admissible(t_minus, t_plus, z.len(), false)
            .ok_or(CsasError::NoAdmissibleSplit { t_minus, t_plus })?;
        Ok(self.compare_in(z, t_minus, t_plus, lo, hi, &mut FitCache::default()))
    }

    /// Full change-point search on one series.
    pub fn detect(&self, z: &[f64]) -> Result<ChangePointSet> {
        let len = z.len();
        if len <= self.delta {
            return Err(CsasError::InvalidParameter {
                name: "series",
                reason: "series must be longer than the minimum change-point spacing",
            });
        }
        if let Some(index) = z.iter().position(|v| !v.is_finite()) {
            return Err(CsasError::NonFinite { what: "curve value", index });
        }
        let mut cache = FitCache::default();
        let mut found: Vec<usize> = Vec::new();
        let (mut lo, mut hi) = (1usize, len);
        let cap = len;

        while hi > lo && hi - lo > self.delta {
            let mut first = hi;
            for _ in 0..cap {
                match self.split(z, lo, first, &mut cache) {
                    Some(c) => first = c,
                    None => break,
                }
            }
            if first == hi {
                break;
            }
            let mut last = first;
            let mut start = lo;
            for _ in 0..cap {
                match self.split(z, start, hi, &mut cache) {
                    Some(c) => {
                        last = c;
                        start = c + 1;
                    }
                    None => break,
                }
            }
            if first == last {
                found.push(first);
                break;
            }
            found.push(first);
            found.push(last);
            if last < first {
                break;
            }
            lo = first + 1;
            hi = last;
        }

        let points = self.refine_with(z, found, &mut cache);
        Ok(ChangePointSet::new(points, self.delta, len))
    }

    /// Drops every point whose neighbourhood `(previous + 1, next)` no longer
    /// favours a split, repeating until a pass removes nothing.
    pub fn refine(&self, z: &[f64], points: &[usize]) -> Vec<usize> {
        self.refine_with(z, points.to_vec(), &mut FitCache::default())
    }

    fn refine_with(&self, z: &[f64], mut points: Vec<usize>, cache: &mut FitCache) -> Vec<usize> {
        let len = z.len();
        points.sort_unstable();
        points.dedup();
        points.retain(|&c| c > 0 && c < len);
        let mut all = vec![0];
        all.extend(points);
        all.push(len);
        loop {
            let mut changed = false;
            let mut s = 1;
            while s + 1 < all.len() {
                let keep = self
                    .window(z, all[s - 1] + 1, all[s + 1], cache)
                    .is_some_and(|c| c.bic0 > c.bic1);
                if keep {
                    s += 1;
                } else {
                    all.remove(s);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        all[1..all.len() - 1].to_vec()
    }
}

/// Best single split of `[t_minus, t_plus]` with the default model.
pub fn estimate_change_point(z: &[f64], t_minus: usize, t_plus: usize, delta: usize) -> Result<usize> {
    Segmenter::new(delta, ModelSpec::default())?.estimate_change_point(z, t_minus, t_plus)
}

/// BIC of the no-change (`nu = 0`) or one-change (`nu = 1`, split after
/// `t_hat`) model on a window, default model.
pub fn segment_bic(z: &[f64], t_minus: usize, t_plus: usize, nu: usize, t_hat: Option<usize>) -> Result<f64> {
    let spec = ModelSpec::default();
    let n = (t_plus.saturating_sub(t_minus) + 1) as f64;
    let s = match (nu, t_hat) {
        (0, _) => spec.rss(z, t_minus, t_plus)?,
        (1, Some(t0)) => spec.split_rss(z, t_minus, t0, t_plus)?,
        (1, None) => {
            return Err(CsasError::InvalidParameter {
                name: "t_hat",
                reason: "the one-change model needs a split point",
            })
        }
        _ => {
            return Err(CsasError::InvalidParameter {
                name: "nu",
                reason: "only 0 or 1 changes are compared",
            })
        }
    };
    Ok(bic_from_variance(t_minus, t_plus, s / n, nu, spec.num_params()))
}

/// Change-point search with the default model.
pub fn detect_change_points(z: &[f64], delta: usize) -> Result<ChangePointSet> {
    Segmenter::new(delta, ModelSpec::default())?.detect(z)
}
