// SPDX-License-Identifier: MIT OR Apache-2.0

//! Autoregressive stretched-sigmoid segment regression.
//!
//! Within a segment `[t_minus, t_plus]` the mean response is
//!
//! ```text
//! f(t; β) = β1 + β2 Φ(β3 + β4 t) + β5 Z_{t-1} + ... + β_{4+p} Z_{t-p}
//! ```
//!
//! with `t` the absolute (1-based) time index, `Φ` the standard normal CDF and
//! lags read from the observed series (zero before `t = 1`).
//!
//! Fitting is done in a centred time coordinate `s = (t - c) / h`, where `c`
//! and `h` are the window midpoint and half-width, so the sigmoid argument is
//! `a + g s`. This keeps the Jacobian well scaled and makes the fitted values
//! independent of where the time origin sits. For a fixed `(a, g)` the model
//! is linear in the remaining coefficients, which is what the initial grid
//! exploits. The grid's best candidates are then polished by Levenberg-
//! Marquardt over all parameters and the result is mapped back to `β`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CsasError, Result};
use crate::linalg::{cholesky, cholesky_solve, invert_spd, solve_spd_with_ridge};
use crate::stats::{
    standard_normal_cdf, standard_normal_pdf, student_t_quantile, student_t_two_sided_p,
};

/// Number of coefficients in the stretched-sigmoid part.
pub const SIGMOID_PARAMS: usize = 4;

/// Stopping rule for the local refinement.
#[derive(Debug, Clone, Copy)]
struct Tolerance {
    max_iterations: usize,
    relative_rss: f64,
}

/// Used for reported fits.
const STRICT: Tolerance = Tolerance {
    max_iterations: 200,
    relative_rss: 1e-10,
};

/// Used when only the minimised RSS of many candidate segments is needed.
const SCREENING: Tolerance = Tolerance {
    max_iterations: 50,
    relative_rss: 1e-8,
};
const STEP_TOLERANCE: f64 = 1e-10;
const REFINED_CANDIDATES: usize = 3;
const GRID_MIDPOINTS: usize = 9;

/// Largest sigmoid slope `|β4|` per unit time. A steeper sigmoid is a jump
/// between two consecutive observations whose position is not identified, and
/// without a bound a single segment would absorb any level shift that way.
pub const MAX_SLOPE: f64 = 1.0;

/// Sigmoid slopes (per unit time) swept by the initial grid, both signs.
const GRID_SLOPES: [f64; 8] = [0.0025, 0.005, 0.01, 0.02, 0.04, 0.08, 0.16, 0.32];

/// Model family: the sigmoid plus `ar_order` autoregressive lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub ar_order: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { ar_order: 2 }
    }
}

/// A fitted segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentModel {
    /// `β1..β4` then one coefficient per lag.
    pub beta: Vec<f64>,
    pub ar_order: usize,
    pub t_minus: usize,
    pub t_plus: usize,
    pub n: usize,
    pub rss: f64,
    /// `rss / (n - k)`, used for inference.
    pub sigma2: f64,
    /// `rss / n`, the normalisation of the segmentation BIC.
    pub sigma2_mle: f64,
    /// Row-major `k x k` covariance of `β̂`, when estimable.
    pub covariance: Option<Vec<f64>>,
    /// A small ridge was needed to invert `JᵀJ`.
    pub ridge_applied: bool,
    pub converged: bool,
    pub iterations: usize,
}

impl SegmentModel {
    pub fn num_params(&self) -> usize {
        self.beta.len()
    }

    pub fn covariance_entry(&self, i: usize, j: usize) -> Option<f64> {
        let k = self.num_params();
        self.covariance.as_ref().map(|c| c[i * k + j])
    }

    /// Fitted value at `t`, with lags taken from `z`.
    pub fn predict_at(&self, z: &[f64], t: usize) -> f64 {
        let lags: Vec<f64> = (1..=self.ar_order).map(|q| lag(z, t, q)).collect();
        predict(&self.beta, t as f64, &lags)
    }
}

/// Per-coefficient t-tests plus optimiser status.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    /// `β̂_k / se_k`; `None` where the standard error is zero or unknown.
    pub t_statistics: Vec<Option<f64>>,
    /// Two-sided p-values with `n - k` degrees of freedom.
    pub p_values: Vec<Option<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub ridge_applied: bool,
}

/// Pointwise delta-method confidence band for the mean response.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceBand {
    pub t_minus: usize,
    pub t_plus: usize,
    pub center: Vec<f64>,
    pub half_width: Vec<f64>,
    pub alpha: f64,
    /// Magnitude of the `α/2` quantile of the t distribution used.
    pub quantile: f64,
    pub df: f64,
}

impl ConfidenceBand {
    pub fn lower(&self) -> impl Iterator<Item = f64> + '_ {
        self.center.iter().zip(&self.half_width).map(|(c, h)| c - h)
    }

    pub fn upper(&self) -> impl Iterator<Item = f64> + '_ {
        self.center.iter().zip(&self.half_width).map(|(c, h)| c + h)
    }
}

/// `Z_{t-q}` for 1-based `t`, zero before the start of the series.
#[inline]
pub fn lag(z: &[f64], t: usize, q: usize) -> f64 {
    if t > q {
        z[t - q - 1]
    } else {
        0.0
    }
}

/// `f(t; β)` for any lag order (`beta.len() == 4 + lags.len()`).
pub fn predict(beta: &[f64], t: f64, lags: &[f64]) -> f64 {
    let u = beta[2] + beta[3] * t;
    let mut f = beta[0] + beta[1] * standard_normal_cdf(u);
    for (b, l) in beta[SIGMOID_PARAMS..].iter().zip(lags) {
        f += b * l;
    }
    f
}

/// Gradient of `f(t; β)` with respect to `β`.
pub fn predict_gradient(beta: &[f64], t: f64, lags: &[f64]) -> Vec<f64> {
    let u = beta[2] + beta[3] * t;
    let dens = beta[1] * standard_normal_pdf(u);
    let mut g = Vec::with_capacity(beta.len());
    g.extend_from_slice(&[1.0, standard_normal_cdf(u), dens, dens * t]);
    g.extend_from_slice(lags);
    g
}

/// `β1 + β2 Φ(β3 + β4 t) + β5 z_{t-1} + β6 z_{t-2}`.
pub fn sigmoid_ar_predict(beta: &[f64; 6], t: f64, z_lag1: f64, z_lag2: f64) -> Result<f64> {
    if let Some(index) = beta.iter().position(|b| !b.is_finite()) {
        return Err(CsasError::NonFinite { what: "coefficient", index });
    }
    if !t.is_finite() {
        return Err(CsasError::NonFinite { what: "time", index: 0 });
    }
    if !z_lag1.is_finite() || !z_lag2.is_finite() {
        return Err(CsasError::NonFinite { what: "lag", index: usize::from(z_lag1.is_finite()) });
    }
    Ok(predict(beta, t, &[z_lag1, z_lag2]))
}

/// Fits one segment with the default two lags.
pub fn fit_segment(z: &[f64], t_minus: usize, t_plus: usize) -> Result<(SegmentModel, FitDiagnostics)> {
    ModelSpec::default().fit(z, t_minus, t_plus)
}

/// Residual sum of squares of a single fit over `[t_minus, t_plus]`.
pub fn residual_sum_s0(z: &[f64], t_minus: usize, t_plus: usize) -> Result<f64> {
    ModelSpec::default().rss(z, t_minus, t_plus)
}

/// Sum of the fits over `[t_minus, t0]` and `[t0 + 1, t_plus]`.
pub fn residual_sum_s1(z: &[f64], t_minus: usize, t0: usize, t_plus: usize) -> Result<f64> {
    ModelSpec::default().split_rss(z, t_minus, t0, t_plus)
}

impl ModelSpec {
    pub fn new(ar_order: usize) -> Self {
        Self { ar_order }
    }

    /// Coefficients per segment, `k = 4 + p`.
    pub fn num_params(&self) -> usize {
        SIGMOID_PARAMS + self.ar_order
    }

    /// Smallest window that leaves one residual degree of freedom.
    pub fn min_points(&self) -> usize {
        self.num_params() + 1
    }

    fn check_window(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<()> {
        if t_minus < 1 || t_plus > z.len() || t_minus > t_plus {
            return Err(CsasError::InvalidWindow {
                t_minus,
                t_plus,
                len: z.len(),
            });
        }
        let len = t_plus - t_minus + 1;
        if len < self.min_points() {
            return Err(CsasError::SegmentTooShort {
                len,
                min: self.min_points(),
            });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(CsasError::NonFinite { what: "curve value", index: i });
        }
        Ok(())
    }

    /// Least-squares fit of the segment `[t_minus, t_plus]` (1-based, inclusive).
    pub fn fit(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<(SegmentModel, FitDiagnostics)> {
        self.check_window(z, t_minus, t_plus)?;
        let window = Window::new(z, t_minus, t_plus, self.ar_order);
        let candidates = window.grid_search();
        let mut best: Option<Refined> = None;
        for cand in candidates.iter().take(REFINED_CANDIDATES) {
            let refined = window.refine(cand, STRICT);
            if best.as_ref().map_or(true, |b| refined.rss < b.rss) {
                best = Some(refined);
            }
        }
        let best = best.expect("grid always yields a candidate");
        let model = window.finish(best);
        let diagnostics = coefficient_t_tests(&model).unwrap_or_else(|_| FitDiagnostics {
            t_statistics: vec![None; model.num_params()],
            p_values: vec![None; model.num_params()],
            converged: model.converged,
            iterations: model.iterations,
            ridge_applied: model.ridge_applied,
        });
        Ok((model, diagnostics))
    }

    pub fn rss(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<f64> {
        self.check_window(z, t_minus, t_plus)?;
        Ok(self.fast_rss(z, t_minus, t_plus))
    }

    /// Minimised RSS without the covariance bookkeeping. Window assumed valid.
    pub(crate) fn fast_rss(&self, z: &[f64], t_minus: usize, t_plus: usize) -> f64 {
        let window = Window::new(z, t_minus, t_plus, self.ar_order);
        let candidates = window.grid_search();
        candidates
            .iter()
            .take(REFINED_CANDIDATES)
            .map(|c| window.refine(c, SCREENING).rss)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn split_rss(&self, z: &[f64], t_minus: usize, t0: usize, t_plus: usize) -> Result<f64> {
        if !(t_minus < t0 && t0 < t_plus) {
            return Err(CsasError::InvalidWindow {
                t_minus,
                t_plus,
                len: z.len(),
            });
        }
        Ok(self.rss(z, t_minus, t0)? + self.rss(z, t0 + 1, t_plus)?)
    }

    /// Best grid candidate's RSS, before any refinement.
    pub fn grid_rss(&self, z: &[f64], t_minus: usize, t_plus: usize) -> Result<f64> {
        self.check_window(z, t_minus, t_plus)?;
        let window = Window::new(z, t_minus, t_plus, self.ar_order);
        Ok(window.grid_search()[0].rss)
    }
}

struct Candidate {
    theta: Vec<f64>,
    rss: f64,
}

struct Refined {
    theta: Vec<f64>,
    rss: f64,
    iterations: usize,
    converged: bool,
}

/// Observations of one window in the centred coordinate.
struct Window {
    t_minus: usize,
    t_plus: usize,
    p: usize,
    center: f64,
    half: f64,
    /// Bound on `|g|`, the sigmoid slope in centred units.
    max_g: f64,
    y: Vec<f64>,
    s: Vec<f64>,
    /// `n x p`, row-major.
    lags: Vec<f64>,
    /// Gram matrix and right-hand side of the linear columns that do not
    /// involve `Φ`: `[1, ., lag_1..lag_p]`.
    fixed: Vec<f64>,
    fixed_rhs: Vec<f64>,
}

/// Scratch buffers for [`Window::profile`].
struct Profile {
    phi: Vec<f64>,
    gram: Vec<f64>,
    rhs: Vec<f64>,
    resid: Vec<f64>,
}

impl Window {
    fn new(z: &[f64], t_minus: usize, t_plus: usize, p: usize) -> Self {
        let center = 0.5 * (t_minus + t_plus) as f64;
        let half = 0.5 * (t_plus - t_minus) as f64;
        let ts = t_minus..=t_plus;
        let y: Vec<f64> = ts.clone().map(|t| z[t - 1]).collect();
        let s = ts.clone().map(|t| (t as f64 - center) / half).collect();
        let mut lags = Vec::with_capacity((t_plus - t_minus + 1) * p);
        for t in ts {
            for q in 1..=p {
                lags.push(lag(z, t, q));
            }
        }
        let q = 2 + p;
        let mut fixed = vec![0.0; q * q];
        let mut fixed_rhs = vec![0.0; q];
        for (i, &yi) in y.iter().enumerate() {
            let l = &lags[i * p..(i + 1) * p];
            fixed[0] += 1.0;
            fixed_rhs[0] += yi;
            for a in 0..p {
                fixed[(2 + a) * q] += l[a];
                fixed_rhs[2 + a] += l[a] * yi;
                for b in 0..=a {
                    fixed[(2 + a) * q + 2 + b] += l[a] * l[b];
                }
            }
        }
        Self {
            t_minus,
            t_plus,
            p,
            center,
            half,
            max_g: MAX_SLOPE * half,
            y,
            s,
            lags,
            fixed,
            fixed_rhs,
        }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    fn k(&self) -> usize {
        SIGMOID_PARAMS + self.p
    }

    fn row_lags(&self, i: usize) -> &[f64] {
        &self.lags[i * self.p..(i + 1) * self.p]
    }

    fn clamp_g(&self, g: f64) -> f64 {
        g.clamp(-self.max_g, self.max_g)
    }

    /// `g` is on its bound and `step` points outward.
    fn pinned(&self, g: f64, step: f64) -> bool {
        g.abs() >= self.max_g && g * step > 0.0
    }

    fn rss_of(&self, theta: &[f64]) -> f64 {
        let mut rss = 0.0;
        for i in 0..self.n() {
            let mut f = theta[0] + theta[1] * standard_normal_cdf(theta[2] + theta[3] * self.s[i]);
            for (b, l) in theta[SIGMOID_PARAMS..].iter().zip(self.row_lags(i)) {
                f += b * l;
            }
            let r = self.y[i] - f;
            rss += r * r;
        }
        rss
    }

    fn scratch(&self) -> Profile {
        let q = 2 + self.p;
        Profile {
            phi: vec![0.0; self.n()],
            gram: vec![0.0; q * q],
            rhs: vec![0.0; q],
            resid: vec![0.0; self.n()],
        }
    }

    /// Solves the linear coefficients `[β1, β2, lags]` for a fixed sigmoid
    /// argument `a + g s`. Leaves the residuals in `buf.resid` and returns
    /// the full parameter vector with its RSS.
    fn profile(&self, a: f64, g: f64, buf: &mut Profile) -> Option<Candidate> {
        let q = 2 + self.p;
        buf.gram.copy_from_slice(&self.fixed);
        buf.rhs.copy_from_slice(&self.fixed_rhs);
        for i in 0..self.n() {
            let v = standard_normal_cdf(a + g * self.s[i]);
            buf.phi[i] = v;
            buf.gram[q] += v;
            buf.gram[q + 1] += v * v;
            buf.rhs[1] += v * self.y[i];
            for (b, l) in self.row_lags(i).iter().enumerate() {
                buf.gram[(2 + b) * q + 1] += v * l;
            }
        }
        for r in 0..q {
            for c in (r + 1)..q {
                buf.gram[r * q + c] = buf.gram[c * q + r];
            }
        }
        let coef = solve_spd_with_ridge(&buf.gram, q, &buf.rhs)?;
        let mut rss = 0.0;
        for i in 0..self.n() {
            let mut f = coef[0] + coef[1] * buf.phi[i];
            for (b, l) in coef[2..].iter().zip(self.row_lags(i)) {
                f += b * l;
            }
            let r = self.y[i] - f;
            buf.resid[i] = r;
            rss += r * r;
        }
        if !rss.is_finite() {
            return None;
        }
        let mut theta = Vec::with_capacity(self.k());
        theta.extend_from_slice(&[coef[0], coef[1], a, g]);
        theta.extend_from_slice(&coef[2..]);
        Some(Candidate { theta, rss })
    }

    /// Sweeps sigmoid slope and midpoint; the linear coefficients are solved
    /// exactly for each. Candidates come back sorted by RSS.
    fn grid_search(&self) -> Vec<Candidate> {
        let mut buf = self.scratch();
        let mut out = Vec::with_capacity(2 * GRID_SLOPES.len() * GRID_MIDPOINTS);
        let span = (self.t_plus - self.t_minus) as f64;
        for &magnitude in GRID_SLOPES.iter() {
            for sign in [1.0, -1.0] {
                let slope = sign * magnitude;
                let g = self.clamp_g(slope * self.half);
                for j in 0..GRID_MIDPOINTS {
                    let mid = self.t_minus as f64 + span * j as f64 / (GRID_MIDPOINTS - 1) as f64;
                    let a = -g * (mid - self.center) / self.half;
                    if let Some(c) = self.profile(a, g, &mut buf) {
                        out.push(c);
                    }
                }
            }
        }
        if out.is_empty() {
            // Degenerate data (e.g. overflow); fall back to the mean.
            let mean = self.y.iter().sum::<f64>() / self.n() as f64;
            let mut theta = vec![0.0; self.k()];
            theta[0] = mean;
            let rss = self.rss_of(&theta);
            out.push(Candidate { theta, rss });
        }
        out.sort_by(|x, y| x.rss.total_cmp(&y.rss));
        out
    }

    /// Levenberg-Marquardt on the profiled RSS over `(a, g)` alone, with the
    /// linear coefficients re-solved at every point. Uses Kaufman's
    /// approximation to the Jacobian of the profiled residuals,
    /// `-(I - P) ∂(Xc)/∂(a, g)` with `P` the projection onto the linear
    /// columns.
    fn refine_profiled(&self, start: &Candidate, tol: Tolerance) -> Candidate {
        let n = self.n();
        let q = 2 + self.p;
        let mut buf = self.scratch();
        let mut best = Candidate {
            theta: start.theta.clone(),
            rss: start.rss,
        };
        let mut resid = vec![0.0; n];
        let mut jac = vec![0.0; 2 * n];
        let mut xtd = vec![0.0; q];
        let mut lambda = 1e-3;
        let mut current = false;
        for _ in 0..tol.max_iterations {
            let x = [best.theta[2], best.theta[3]];
            if !current {
                match self.profile(x[0], x[1], &mut buf) {
                    Some(c) => best = c,
                    None => break,
                }
            }
            resid.copy_from_slice(&buf.resid);
            let c1 = best.theta[1];
            let mut ok = true;
            for j in 0..2 {
                let col = &mut jac[j * n..(j + 1) * n];
                for i in 0..n {
                    let d = c1 * standard_normal_pdf(x[0] + x[1] * self.s[i]);
                    col[i] = if j == 0 { d } else { d * self.s[i] };
                }
                xtd.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..n {
                    xtd[0] += col[i];
                    xtd[1] += buf.phi[i] * col[i];
                    for (b, l) in self.row_lags(i).iter().enumerate() {
                        xtd[2 + b] += l * col[i];
                    }
                }
                let Some(w) = solve_spd_with_ridge(&buf.gram, q, &xtd) else {
                    ok = false;
                    break;
                };
                for i in 0..n {
                    let mut proj = w[0] + w[1] * buf.phi[i];
                    for (b, l) in self.row_lags(i).iter().enumerate() {
                        proj += w[2 + b] * l;
                    }
                    col[i] = proj - col[i];
                }
            }
            if !ok {
                break;
            }
            let (mut h00, mut h01, mut h11, mut g0, mut g1) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let (j0, j1) = (jac[i], jac[n + i]);
                h00 += j0 * j0;
                h01 += j0 * j1;
                h11 += j1 * j1;
                g0 += j0 * resid[i];
                g1 += j1 * resid[i];
            }
            let floor = 1e-12 * h00.max(h11);
            if !(floor > 0.0) || !floor.is_finite() {
                break;
            }
            let mut improved = None;
            while lambda <= 1e16 {
                let a00 = h00 + lambda * h00.max(floor);
                let a11 = h11 + lambda * h11.max(floor);
                let det = a00 * a11 - h01 * h01;
                if det > 0.0 {
                    let mut d0 = -(a11 * g0 - h01 * g1) / det;
                    let mut d1 = -(a00 * g1 - h01 * g0) / det;
                    if self.pinned(x[1], d1) {
                        // Slope sits on its bound: optimise the offset alone.
                        d0 = -g0 / a00;
                        d1 = 0.0;
                    }
                    let trial = [x[0] + d0, self.clamp_g(x[1] + d1)];
                    if let Some(c) = self.profile(trial[0], trial[1], &mut buf) {
                        if c.rss < best.rss {
                            let step = libm::hypot(trial[0] - x[0], trial[1] - x[1]);
                            let scale = libm::hypot(x[0], x[1]);
                            improved = Some((c, step, scale));
                            lambda = (lambda * 0.1).max(1e-15);
                            break;
                        }
                    }
                }
                lambda *= 10.0;
            }
            let Some((c, step, scale)) = improved else {
                break;
            };
            let rel_change = (best.rss - c.rss) / best.rss;
            best = c;
            current = true;
            if best.rss == 0.0
                || rel_change < tol.relative_rss
                || step < STEP_TOLERANCE * (scale + STEP_TOLERANCE)
            {
                break;
            }
        }
        best
    }

    /// Profiled descent followed by a joint polish of all parameters.
    fn refine(&self, start: &Candidate, tol: Tolerance) -> Refined {
        let profiled = self.refine_profiled(start, tol);
        self.polish(&profiled.theta, profiled.rss, tol)
    }

    /// Builds `JᵀJ` and `Jᵀr` at `theta`; returns the RSS.
    fn normal_equations(&self, theta: &[f64], h: &mut [f64], g: &mut [f64], jrow: &mut [f64]) -> f64 {
        let k = self.k();
        h.iter_mut().for_each(|v| *v = 0.0);
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut rss = 0.0;
        for i in 0..self.n() {
            let u = theta[2] + theta[3] * self.s[i];
            let cdf = standard_normal_cdf(u);
            let dens = theta[1] * standard_normal_pdf(u);
            jrow[0] = 1.0;
            jrow[1] = cdf;
            jrow[2] = dens;
            jrow[3] = dens * self.s[i];
            let mut f = theta[0] + theta[1] * cdf;
            for (c, l) in self.row_lags(i).iter().enumerate() {
                jrow[SIGMOID_PARAMS + c] = *l;
                f += theta[SIGMOID_PARAMS + c] * l;
            }
            let r = self.y[i] - f;
            rss += r * r;
            for a in 0..k {
                g[a] += jrow[a] * r;
                for b in 0..=a {
                    h[a * k + b] += jrow[a] * jrow[b];
                }
            }
        }
        for a in 0..k {
            for b in (a + 1)..k {
                h[a * k + b] = h[b * k + a];
            }
        }
        rss
    }

    /// Levenberg-Marquardt over all parameters with Marquardt diagonal
    /// scaling. Only decreasing steps are accepted, so the result never
    /// exceeds the starting RSS.
    fn polish(&self, start: &[f64], start_rss: f64, tol: Tolerance) -> Refined {
        let k = self.k();
        let mut theta = start.to_vec();
        let mut rss = start_rss;
        let mut h = vec![0.0; k * k];
        let mut g = vec![0.0; k];
        let mut jrow = vec![0.0; k];
        let mut a = vec![0.0; k * k];
        let mut trial = vec![0.0; k];
        let mut lambda = 1e-3;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < tol.max_iterations {
            iterations += 1;
            if rss == 0.0 {
                converged = true;
                break;
            }
            self.normal_equations(&theta, &mut h, &mut g, &mut jrow);
            let max_diag = (0..k).map(|i| h[i * k + i]).fold(0.0_f64, f64::max);
            if !(max_diag > 0.0) || !max_diag.is_finite() {
                converged = true;
                break;
            }
            let floor = 1e-12 * max_diag;
            let mut accepted = false;
            loop {
                a.copy_from_slice(&h);
                for i in 0..k {
                    a[i * k + i] += lambda * h[i * k + i].max(floor);
                }
                if cholesky(&mut a, k, 0.0).is_ok() {
                    let mut step = g.clone();
                    cholesky_solve(&a, k, &mut step);
                    if self.pinned(theta[3], step[3]) {
                        // Re-solve with the slope held on its bound.
                        a.copy_from_slice(&h);
                        for i in 0..k {
                            a[i * k + i] += lambda * h[i * k + i].max(floor);
                            a[3 * k + i] = 0.0;
                            a[i * k + 3] = 0.0;
                        }
                        a[3 * k + 3] = 1.0;
                        step.copy_from_slice(&g);
                        step[3] = 0.0;
                        if cholesky(&mut a, k, 0.0).is_err() {
                            lambda *= 10.0;
                            if lambda > 1e16 {
                                break;
                            }
                            continue;
                        }
                        cholesky_solve(&a, k, &mut step);
                    }
                    for i in 0..k {
                        trial[i] = theta[i] + step[i];
                    }
                    trial[3] = self.clamp_g(trial[3]);
                    let trial_rss = self.rss_of(&trial);
                    if trial_rss < rss {
                        let step_norm = libm::sqrt(step.iter().map(|v| v * v).sum());
                        let theta_norm = libm::sqrt(theta.iter().map(|v| v * v).sum());
                        let rel_change = (rss - trial_rss) / rss;
                        theta.copy_from_slice(&trial);
                        rss = trial_rss;
                        lambda = (lambda * 0.1).max(1e-15);
                        accepted = true;
                        if rel_change < tol.relative_rss
                            || step_norm < STEP_TOLERANCE * (theta_norm + STEP_TOLERANCE)
                        {
                            converged = true;
                        }
                        break;
                    }
                }
                lambda *= 10.0;
                if lambda > 1e16 {
                    break;
                }
            }
            if !accepted {
                // No descent direction left at machine precision.
                converged = true;
                break;
            }
            if converged {
                break;
            }
        }
        Refined {
            theta,
            rss,
            iterations,
            converged,
        }
    }

    fn finish(&self, fit: Refined) -> SegmentModel {
        let k = self.k();
        let n = self.n();
        let theta = &fit.theta;
        let mut beta = theta.clone();
        beta[2] = theta[2] - theta[3] * self.center / self.half;
        beta[3] = theta[3] / self.half;

        let mut h = vec![0.0; k * k];
        let mut g = vec![0.0; k];
        let mut jrow = vec![0.0; k];
        self.normal_equations(theta, &mut h, &mut g, &mut jrow);
        let sigma2 = fit.rss / (n - k) as f64;
        let (inverse, ridge_applied) = information_inverse(&h, k);
        let covariance = inverse.map(|inv| {
            // β = A θ with A the identity except the two sigmoid rows.
            let mut amat = vec![0.0; k * k];
            for i in 0..k {
                amat[i * k + i] = 1.0;
            }
            amat[2 * k + 3] = -self.center / self.half;
            amat[3 * k + 3] = 1.0 / self.half;
            let mut tmp = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..k {
                    tmp[i * k + j] = (0..k).map(|m| amat[i * k + m] * inv[m * k + j]).sum();
                }
            }
            let mut cov = vec![0.0; k * k];
            for i in 0..k {
                for j in 0..=i {
                    let v: f64 = (0..k).map(|m| tmp[i * k + m] * amat[j * k + m]).sum::<f64>() * sigma2;
                    cov[i * k + j] = v;
                    cov[j * k + i] = v;
                }
            }
            cov
        });
        SegmentModel {
            beta,
            ar_order: self.p,
            t_minus: self.t_minus,
            t_plus: self.t_plus,
            n,
            rss: fit.rss,
            sigma2,
            sigma2_mle: fit.rss / n as f64,
            covariance,
            ridge_applied,
            converged: fit.converged,
            iterations: fit.iterations,
        }
    }
}

/// `(JᵀJ)⁻¹`, with a `1e-10 * trace / k` ridge when the scaled matrix is
/// numerically singular.
fn information_inverse(h: &[f64], k: usize) -> (Option<Vec<f64>>, bool) {
    let diag: Vec<f64> = (0..k).map(|i| h[i * k + i]).collect();
    let well_posed = diag.iter().all(|d| *d > 0.0 && d.is_finite()) && {
        let mut corr = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                corr[i * k + j] = h[i * k + j] / libm::sqrt(diag[i] * diag[j]);
            }
        }
        cholesky(&mut corr, k, 1e-12).is_ok()
    };
    if well_posed {
        if let Some(inv) = invert_spd(h, k) {
            return (Some(inv), false);
        }
    }
    let trace: f64 = diag.iter().sum();
    if !(trace > 0.0) || !trace.is_finite() {
        return (None, true);
    }
    let mut ridged = h.to_vec();
    let ridge = 1e-10 * trace / k as f64;
    for i in 0..k {
        ridged[i * k + i] += ridge;
    }
    (invert_spd(&ridged, k), true)
}

/// t statistics and two-sided p-values with `n - k` degrees of freedom.
pub fn coefficient_t_tests(model: &SegmentModel) -> Result<FitDiagnostics> {
    let k = model.num_params();
    let cov = model.covariance.as_ref().ok_or(CsasError::CovarianceUnavailable)?;
    if model.n <= k {
        return Err(CsasError::SegmentTooShort {
            len: model.n,
            min: k + 1,
        });
    }
    let df = (model.n - k) as f64;
    let mut t_statistics = Vec::with_capacity(k);
    let mut p_values = Vec::with_capacity(k);
    for i in 0..k {
        let var = cov[i * k + i];
        if var > 0.0 && var.is_finite() {
            let t = model.beta[i] / libm::sqrt(var);
            t_statistics.push(Some(t));
            p_values.push(Some(student_t_two_sided_p(t, df)));
        } else {
            t_statistics.push(None);
            p_values.push(None);
        }
    }
    Ok(FitDiagnostics {
        t_statistics,
        p_values,
        converged: model.converged,
        iterations: model.iterations,
        ridge_applied: model.ridge_applied,
    })
}

/// Delta-method band `f(t; β̂) ± |t*_{α/2}| sqrt(∇fᵀ Var(β̂) ∇f)`.
///
/// Degrees of freedom are `t_plus - t_minus - k`, floored at one.
pub fn delta_method_band(
    model: &SegmentModel,
    z: &[f64],
    t_minus: usize,
    t_plus: usize,
    alpha: f64,
) -> Result<ConfidenceBand> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CsasError::InvalidParameter {
            name: "alpha",
            reason: "must lie strictly between 0 and 1",
        });
    }
    if t_minus < 1 || t_plus > z.len() || t_minus > t_plus {
        return Err(CsasError::InvalidWindow {
            t_minus,
            t_plus,
            len: z.len(),
        });
    }
    let k = model.num_params();
    let cov = model.covariance.as_ref().ok_or(CsasError::CovarianceUnavailable)?;
    let df = ((t_plus - t_minus) as f64 - k as f64).max(1.0);
    let quantile = student_t_quantile(1.0 - 0.5 * alpha, df);
    let mut center = Vec::with_capacity(t_plus - t_minus + 1);
    let mut half_width = Vec::with_capacity(t_plus - t_minus + 1);
    let mut lags = vec![0.0; model.ar_order];
    for t in t_minus..=t_plus {
        for (q, l) in lags.iter_mut().enumerate() {
            *l = lag(z, t, q + 1);
        }
        let tf = t as f64;
        center.push(predict(&model.beta, tf, &lags));
        let grad = predict_gradient(&model.beta, tf, &lags);
        let mut var = 0.0;
        for i in 0..k {
            for j in 0..k {
                var += grad[i] * cov[i * k + j] * grad[j];
            }
        }
        half_width.push(quantile * libm::sqrt(var.max(0.0)));
    }
    Ok(ConfidenceBand {
        t_minus,
        t_plus,
        center,
        half_width,
        alpha,
        quantile,
        df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigmoid_curve(beta: [f64; 4], len: usize) -> Vec<f64> {
        (1..=len)
            .map(|t| beta[0] + beta[1] * standard_normal_cdf(beta[2] + beta[3] * t as f64))
            .collect()
    }

    #[test]
    fn predict_examples() {
        let b = [3.5, 0.0, 1.0, 2.0, 0.0, 0.0];
        for t in [0.0, 1.0, 40.0] {
            assert_eq!(sigmoid_ar_predict(&b, t, 7.0, -2.0).unwrap(), 3.5);
        }
        let b = [0.0, 2.0, -5.0, 0.5, 0.0, 0.0];
        assert_eq!(sigmoid_ar_predict(&b, 10.0, 0.0, 0.0).unwrap(), 1.0);
        let b = [0.0, 10.0, -4.0, -0.05, 0.0, 0.0];
        let v = sigmoid_ar_predict(&b, 0.0, 0.0, 0.0).unwrap();
        assert!((v - 3.167_124_183_311_992e-4).abs() < 1e-16);
        assert!(sigmoid_ar_predict(&[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], 1.0, 0.0, 0.0).is_err());
        assert!(sigmoid_ar_predict(&b, 1.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn lags_are_zero_before_the_series() {
        let z = [1.0, 2.0, 3.0];
        assert_eq!(lag(&z, 1, 1), 0.0);
        assert_eq!(lag(&z, 2, 1), 1.0);
        assert_eq!(lag(&z, 2, 2), 0.0);
        assert_eq!(lag(&z, 3, 2), 1.0);
    }

    #[test]
    fn recovers_noiseless_sigmoid() {
        let z = sigmoid_curve([0.0, 10.0, -3.0, 0.05], 60);
        let (m, d) = fit_segment(&z, 1, 60).unwrap();
        let truth = [0.0, 10.0, -3.0, 0.05, 0.0, 0.0];
        for (b, t) in m.beta.iter().zip(truth) {
            assert!((b - t).abs() < 1e-3, "{:?}", m.beta);
        }
        assert!(m.rss <= 1e-10, "rss {}", m.rss);
        assert!(d.converged);
    }

    #[test]
    fn constant_series_is_fit_exactly() {
        let z = vec![5.0; 30];
        let (m, _) = fit_segment(&z, 4, 25).unwrap();
        assert!(m.rss < 1e-18, "rss {}", m.rss);
        for t in 4..=25 {
            assert!((m.predict_at(&z, t) - 5.0).abs() < 1e-9);
        }
    }

    #[test]
    fn window_errors() {
        let z = vec![0.0; 10];
        assert_eq!(
            fit_segment(&z, 1, 6).unwrap_err(),
            CsasError::SegmentTooShort { len: 6, min: 7 }
        );
        assert!(fit_segment(&z, 0, 8).is_err());
        assert!(fit_segment(&z, 3, 11).is_err());
        assert!(residual_sum_s1(&z, 1, 1, 10).is_err());
    }

    #[test]
    fn level_jump_split_is_exact() {
        let mut z = vec![0.0; 20];
        z.extend(vec![3.0; 20]);
        let s0 = residual_sum_s0(&z, 1, 40).unwrap();
        let s1 = residual_sum_s1(&z, 1, 20, 40).unwrap();
        assert!(s1 < 1e-18, "{s1}");
        assert!(s0 > 1e-6, "{s0}");
    }

    #[test]
    fn zero_covariance_gives_zero_band() {
        let z = sigmoid_curve([1.0, 2.0, -1.0, 0.1], 20);
        let (mut m, _) = fit_segment(&z, 1, 20).unwrap();
        m.covariance = Some(vec![0.0; 36]);
        let band = delta_method_band(&m, &z, 1, 20, 0.05).unwrap();
        assert!(band.half_width.iter().all(|&h| h == 0.0));
        m.covariance = None;
        assert_eq!(
            delta_method_band(&m, &z, 1, 20, 0.05).unwrap_err(),
            CsasError::CovarianceUnavailable
        );
        assert!(coefficient_t_tests(&m).is_err());
    }

    #[test]
    fn intercept_only_variance_band() {
        let z = sigmoid_curve([1.0, 2.0, -1.0, 0.1], 20);
        let (mut m, _) = fit_segment(&z, 1, 20).unwrap();
        m.beta[1] = 0.0;
        let mut cov = vec![0.0; 36];
        cov[0] = 0.04;
        m.covariance = Some(cov);
        let band = delta_method_band(&m, &z, 3, 20, 0.05).unwrap();
        let q = student_t_quantile(0.975, 20.0 - 3.0 - 6.0);
        for h in &band.half_width {
            assert!((h - q * 0.2).abs() < 1e-14);
        }
        assert!(delta_method_band(&m, &z, 3, 20, 1.0).is_err());
    }

    #[test]
    fn t_test_of_zero_coefficient() {
        let z = sigmoid_curve([1.0, 2.0, -1.0, 0.1], 20);
        let (mut m, _) = fit_segment(&z, 1, 20).unwrap();
        m.beta[0] = 0.0;
        let mut cov = vec![0.0; 36];
        cov[0] = 1.0;
        m.covariance = Some(cov);
        let d = coefficient_t_tests(&m).unwrap();
        assert_eq!(d.t_statistics[0], Some(0.0));
        assert_eq!(d.p_values[0], Some(1.0));
        assert_eq!(d.t_statistics[1], None);
    }
}
