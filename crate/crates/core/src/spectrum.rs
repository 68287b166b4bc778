//! Large-deviation layer: the log-moment function `Lambda`, its Legendre
//! conjugate `J`, the exponent `kappa` computed two ways, the speed, and
//! moments of `R = 1 + sum_n rho_0 rho_{-1} .. rho_{-n}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentModel, EnvironmentRealization, ModelSpec, BOUNDARY_TOL};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{derive_seed, Domain};
use crate::stats::{self, CompensatedSum};

/// `Lambda(lambda) - lambda * shift`, evaluated without cancellation.
///
/// For i.i.d. models this is `log E exp(lambda (log rho - shift))`; for
/// Markov models it is the log Perron root of
/// `P_ij exp(lambda (log rho_j - shift))`.
pub fn shifted_lambda(model: &EnvironmentModel, lam: f64, shift: f64) -> f64 {
    if lam == 0.0 {
        return 0.0;
    }
    let exps: Vec<f64> = model
        .log_rho_values()
        .iter()
        .map(|l| lam * (l - shift))
        .collect();
    match model.iid_weights() {
        Some(w) => {
            let m = w
                .iter()
                .zip(&exps)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, e)| *e)
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = w
                .iter()
                .zip(&exps)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, e)| w * (e - m).exp())
                .sum();
            m + s.ln()
        }
        None => {
            let (m, tilted) = tilted_matrix(&model.transition(), &exps);
            m + linalg::perron_root(&tilted).ln()
        }
    }
}

/// `P_ij exp(e_j - m)` with `m = max_j e_j`.
fn tilted_matrix(p: &Matrix, exps: &[f64]) -> (f64, Matrix) {
    let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale: Vec<f64> = exps.iter().map(|e| (e - m).exp()).collect();
    let tilted = p
        .iter()
        .map(|row| row.iter().zip(&scale).map(|(p, s)| p * s).collect())
        .collect();
    (m, tilted)
}

/// `Lambda(lambda) = lim (1/n) log E prod_{i<n} rho_i^lambda`.
pub fn lambda_fn(model: &EnvironmentModel, lam: f64) -> f64 {
    shifted_lambda(model, lam, 0.0)
}

/// `Lambda'(lambda)`, analytic in both model classes.
pub fn lambda_derivative(model: &EnvironmentModel, lam: f64) -> f64 {
    let logs = model.log_rho_values();
    let exps: Vec<f64> = logs.iter().map(|l| lam * l).collect();
    match model.iid_weights() {
        Some(w) => {
            let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let (mut num, mut den) = (0.0, 0.0);
            for ((w, e), l) in w.iter().zip(&exps).zip(&logs) {
                let t = w * (e - m).exp();
                num += t * l;
                den += t;
            }
            num / den
        }
        None => {
            // d r / d lambda = u^T M' v / u^T v with M'_ij = M_ij log rho_j
            let (_, tilted) = tilted_matrix(&model.transition(), &exps);
            let pf = linalg::perron(&tilted);
            let n = tilted.len();
            let (mut num, mut den) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    num += pf.left[i] * tilted[i][j] * logs[j] * pf.right[j];
                }
                den += pf.left[i] * pf.right[i];
            }
            num / (pf.root * den)
        }
    }
}

/// Closure of the range of `Lambda'`: the extreme achievable averages of `log rho`.
pub fn slope_range(model: &EnvironmentModel) -> (f64, f64) {
    let logs = model.log_rho_values();
    match model.iid_weights() {
        Some(w) => {
            let active = || logs.iter().zip(w).filter(|(_, w)| **w > 0.0).map(|(l, _)| *l);
            (
                active().fold(f64::INFINITY, f64::min),
                active().fold(f64::NEG_INFINITY, f64::max),
            )
        }
        None => {
            let p = model.transition();
            (
                linalg::min_cycle_mean(&p, &logs),
                linalg::max_cycle_mean(&p, &logs),
            )
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRoot {
    pub kappa: f64,
    /// Set when `Lambda(1) = 0`, so `kappa = 1` sits on the edge of the zero-speed regime.
    pub boundary: bool,
}

const KAPPA_TOL: f64 = 1e-12;

/// The positive zero of `Lambda`, by bisection.
pub fn kappa_root(model: &EnvironmentModel) -> Result<KappaRoot> {
    let mut lo = 1e-9;
    if lambda_fn(model, lo) >= 0.0 {
        return Err(Error::NotTransient {
            mean_log_rho: model.mean_log_rho(),
        });
    }
    let at_one = lambda_fn(model, 1.0);
    if at_one.abs() <= BOUNDARY_TOL {
        return Ok(KappaRoot {
            kappa: 1.0,
            boundary: true,
        });
    }
    let mut hi = 1.0;
    let mut at_hi = at_one;
    while at_hi < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoPositiveRoot { searched_to: hi });
        }
        at_hi = lambda_fn(model, hi);
    }
    while hi - lo > KAPPA_TOL {
        let mid = 0.5 * (lo + hi);
        if lambda_fn(model, mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(KappaRoot {
        kappa: 0.5 * (lo + hi),
        boundary: false,
    })
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Golden-section maximization of a unimodal function on `[a, b]`.
fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..400 {
        if (b - a).abs() <= tol * (1.0 + c.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// `lim_{lambda -> +-inf} lambda x - Lambda(lambda)` at an end point of the slope range.
fn boundary_rate(model: &EnvironmentModel, x: f64, direction: f64) -> f64 {
    let mut prev = f64::NEG_INFINITY;
    let mut lam = direction;
    for _ in 0..48 {
        let g = -shifted_lambda(model, lam, x);
        if (g - prev).abs() <= 1e-14 * g.abs().max(1.0) {
            return g;
        }
        prev = g;
        lam *= 2.0;
    }
    prev
}

/// Rate function `J(x) = sup_lambda { lambda x - Lambda(lambda) }`.
///
/// Returns `f64::INFINITY` outside the closure of the range of `Lambda'`.
pub fn rate_function(model: &EnvironmentModel, x: f64) -> f64 {
    let (xmin, xmax) = slope_range(model);
    let tol = 1e-12 * x.abs().max(1.0);
    if xmax - xmin <= tol {
        return if (x - xmin).abs() <= tol { 0.0 } else { f64::INFINITY };
    }
    if x < xmin - tol || x > xmax + tol {
        return f64::INFINITY;
    }
    if (x - xmax).abs() <= tol {
        return boundary_rate(model, xmax, 1.0);
    }
    if (x - xmin).abs() <= tol {
        return boundary_rate(model, xmin, -1.0);
    }
    // bracket the maximizer using the monotone derivative
    let dir = if lambda_derivative(model, 0.0) < x { 1.0 } else { -1.0 };
    let mut far = dir;
    let mut near = 0.0;
    while dir * (lambda_derivative(model, far) - x) < 0.0 {
        near = far;
        far *= 2.0;
        if far.abs() > 1e12 {
            return boundary_rate(model, x, dir);
        }
    }
    let (a, b) = if dir > 0.0 { (near, far) } else { (far, near) };
    let (_, g) = golden_max(|lam| -shifted_lambda(model, lam, x), a, b, 1e-13);
    g.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateKappa {
    /// `min_{y > 0} J(y)/y`; infinite when `J` is infinite on `(0, inf)`.
    pub kappa: f64,
    pub minimizer: Option<f64>,
    /// All grid points within `1e-9` (relative) of the minimum, as a closed interval.
    pub argmin_interval: Option<(f64, f64)>,
}

const RATE_GRID_STEP: f64 = 1e-3;

/// `kappa = min_{y > 0} J(y) / y` by grid search plus golden-section refinement.
pub fn kappa_via_rate(model: &EnvironmentModel) -> RateKappa {
    let (_, ymax) = slope_range(model);
    if ymax <= 0.0 {
        return RateKappa {
            kappa: f64::INFINITY,
            minimizer: None,
            argmin_interval: None,
        };
    }
    let ratio = |y: f64| rate_function(model, y) / y;
    let steps = (ymax / RATE_GRID_STEP).ceil() as usize;
    let grid: Vec<f64> = (1..=steps)
        .map(|k| (k as f64 * RATE_GRID_STEP).min(ymax))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&y| ratio(y)).collect();
    let (best, &best_val) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty grid");
    if !best_val.is_finite() {
        return RateKappa {
            kappa: f64::INFINITY,
            minimizer: None,
            argmin_interval: None,
        };
    }
    let a = if best == 0 { 1e-12 } else { grid[best - 1] };
    let b = grid[(best + 1).min(grid.len() - 1)];
    let (y, neg) = golden_max(|y| -ratio(y), a, b, 1e-12);
    let (minimizer, kappa) = if -neg < best_val {
        (y, -neg)
    } else {
        (grid[best], best_val)
    };
    let flat = |v: f64| v <= kappa + 1e-9 * kappa.abs().max(1.0);
    let first = values.iter().position(|&v| flat(v)).unwrap_or(best);
    let last = values.iter().rposition(|&v| flat(v)).unwrap_or(best);
    RateKappa {
        kappa,
        minimizer: Some(minimizer),
        argmin_interval: Some((grid[first].min(minimizer), grid[last].max(minimizer))),
    }
}

/// `E prod_{k=0}^{n} rho_{-k}` for `n = 0..depth`, exact under the model.
pub fn r_term_expectations(model: &EnvironmentModel, depth: usize) -> Vec<f64> {
    let p = model.transition();
    let rho = model.rho_values();
    let n = rho.len();
    // row vector v_k(j) = E[prod; state of the last site = j]
    let mut v: Vec<f64> = model.marginal().iter().zip(&rho).map(|(p, r)| p * r).collect();
    let mut out = Vec::with_capacity(depth);
    for _ in 0..depth {
        out.push(v.iter().sum());
        let mut next = vec![0.0; n];
        for (i, vi) in v.iter().enumerate() {
            for j in 0..n {
                // the backward chain of a stationary Markov environment is the reversed kernel;
                // the expectation of the product is the same in either direction
                next[j] += vi * p[i][j] * rho[j];
            }
        }
        v = next;
    }
    out
}

/// Partial sums `R_k = 1 + sum_{m<k} prod_{i<=m} rho_{-i}` of a single realization at `depths`.
fn truncated_r(realization: &EnvironmentRealization, depths: &[usize]) -> Vec<f64> {
    let max_depth = depths.iter().copied().max().unwrap_or(0);
    let rhos = realization.rho_leftward(max_depth);
    let mut out = vec![0.0; depths.len()];
    let mut sum = CompensatedSum::new();
    sum.add(1.0);
    let mut prod = 1.0;
    for k in 0..=max_depth {
        for (slot, &d) in out.iter_mut().zip(depths) {
            if d == k {
                *slot = sum.value();
            }
        }
        if k < max_depth {
            prod *= rhos[k];
            sum.add(prod);
        }
    }
    out
}

fn replica_realization(model: &EnvironmentModel, seed: u64, replica: u64) -> EnvironmentRealization {
    model.realize_with_seed(derive_seed(seed, &[Domain::EnvironmentSeed as u64, replica]))
}

/// Relative increment over the last tenth of the depth below which a series counts as converged.
pub const TAIL_TOL: f64 = 1e-9;

fn tail_depth(depth: usize) -> usize {
    depth - (depth / 10).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub truncation_depth: usize,
    pub replicas: usize,
    /// Monte Carlo mean of the truncated `R` over environment draws.
    pub mean_r: f64,
    pub mean_r_stderr: f64,
    /// Exact expectation of the truncated series.
    pub mean_r_series: f64,
    /// Relative increment of the exact series over the last tenth of the depth.
    pub tail_increment: f64,
    /// `Some(v)` when the series converged, `None` for the zero-speed (divergent) case.
    pub speed: Option<f64>,
}

impl SpeedEstimate {
    pub fn diverged(&self) -> bool {
        self.speed.is_none()
    }
}

/// Speed `v = 1 / (2 E R - 1)` from a truncated Monte Carlo estimate of `E R`.
///
/// Convergence of `E R` is judged on the exact term expectations: the Monte
/// Carlo mean of a truncated heavy-tailed series always looks finite.
pub fn speed(model: &EnvironmentModel, truncation_depth: usize, replicas: usize, seed: u64) -> Result<SpeedEstimate> {
    if truncation_depth < 10 || replicas == 0 {
        return Err(Error::InvalidArgument(
            "speed needs truncation_depth >= 10 and replicas >= 1".into(),
        ));
    }
    let terms = r_term_expectations(model, truncation_depth);
    let series = |d: usize| 1.0 + stats::compensated_sum(terms[..d].iter().copied());
    let full = series(truncation_depth);
    let part = series(tail_depth(truncation_depth));
    let tail_increment = if full.is_finite() {
        (full - part) / full
    } else {
        f64::INFINITY
    };
    let samples: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| truncated_r(&replica_realization(model, seed, r), &[truncation_depth])[0])
        .collect();
    let (mean_r, mean_r_stderr) = stats::mean_and_stderr(&samples);
    let converged = tail_increment.is_finite() && tail_increment < TAIL_TOL;
    Ok(SpeedEstimate {
        truncation_depth,
        replicas,
        mean_r,
        mean_r_stderr,
        mean_r_series: full,
        tail_increment,
        speed: converged.then(|| 1.0 / (2.0 * mean_r - 1.0)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentWarning {
    /// `beta >= kappa`: `E R^beta` is infinite.
    BetaAtOrAboveKappa { kappa: f64 },
    /// The estimate still moved by more than the tail tolerance over the last tenth of the depth.
    TailNotSettled { relative_increment: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RMomentEstimate {
    pub beta: f64,
    pub truncation_depth: usize,
    pub replicas: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// Relative change of the estimate over the last tenth of the depth.
    pub tail_diagnostic: f64,
    pub warnings: Vec<MomentWarning>,
}

/// Monte Carlo estimate of `E (R_depth)^beta` over independent environments.
///
/// Environment draws depend only on `(seed, replica)`, so for a fixed seed the
/// estimate is nondecreasing in `truncation_depth`.
pub fn r_moment(
    model: &EnvironmentModel,
    beta: f64,
    truncation_depth: usize,
    replicas: usize,
    seed: u64,
) -> Result<RMomentEstimate> {
    if !(beta > 0.0) || truncation_depth < 10 || replicas == 0 {
        return Err(Error::InvalidArgument(
            "r_moment needs beta > 0, truncation_depth >= 10, replicas >= 1".into(),
        ));
    }
    let depths = [tail_depth(truncation_depth), truncation_depth];
    let rows: Vec<[f64; 2]> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let v = truncated_r(&replica_realization(model, seed, r), &depths);
            [v[0].powf(beta), v[1].powf(beta)]
        })
        .collect();
    let early: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let full: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (estimate, stderr) = stats::mean_and_stderr(&full);
    let early_mean = stats::compensated_sum(early.iter().copied()) / replicas as f64;
    let tail_diagnostic = (estimate - early_mean) / estimate;
    let mut warnings = Vec::new();
    if let Ok(k) = kappa_root(model) {
        if beta >= k.kappa {
            warnings.push(MomentWarning::BetaAtOrAboveKappa { kappa: k.kappa });
        }
    }
    if tail_diagnostic >= TAIL_TOL {
        warnings.push(MomentWarning::TailNotSettled {
            relative_increment: tail_diagnostic,
        });
    }
    Ok(RMomentEstimate {
        beta,
        truncation_depth,
        replicas,
        estimate,
        stderr,
        tail_diagnostic,
        warnings,
    })
}

/// `(1/n) sum_{i<n} log rho_i` along one realization.
pub fn empirical_log_rho_mean(realization: &EnvironmentRealization, n: usize) -> f64 {
    assert!(n >= 1, "n must be positive");
    let logs = realization.rho_range(0, n as i64).into_iter().map(f64::ln);
    stats::compensated_sum(logs) / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumOptions {
    pub lambda_step: f64,
    pub lambda_max: f64,
    pub rate_points: usize,
    pub speed_depth: usize,
    pub speed_replicas: usize,
    pub seed: u64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        Self {
            lambda_step: 0.05,
            lambda_max: 2.0,
            rate_points: 201,
            speed_depth: 1000,
            speed_replicas: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub model: ModelSpec,
    pub mean_log_rho: f64,
    pub slope_range: (f64, f64),
    /// `(lambda, Lambda(lambda))`, starting at `lambda = 0`.
    pub lambda_grid: Vec<(f64, f64)>,
    pub kappa_root: Option<KappaRoot>,
    pub kappa_via_rate: RateKappa,
    /// `(x, J(x))`; `None` encodes `J = +inf`.
    pub rate_grid: Vec<(f64, Option<f64>)>,
    /// `Lambda` at the grid point closest to `kappa / 2` (a witness for a negative value).
    pub negative_witness: Option<(f64, f64)>,
    pub speed: SpeedEstimate,
}

pub fn spectrum_report(model: &EnvironmentModel, opts: &SpectrumOptions) -> Result<SpectrumReport> {
    let steps = (opts.lambda_max / opts.lambda_step).round() as usize;
    let lambda_grid: Vec<(f64, f64)> = (0..=steps)
        .map(|k| {
            let lam = k as f64 * opts.lambda_step;
            (lam, lambda_fn(model, lam))
        })
        .collect();
    let kappa = kappa_root(model).ok();
    let (xmin, xmax) = slope_range(model);
    let pad = 0.05 * (xmax - xmin).max(0.1);
    let (lo, hi) = (xmin - pad, xmax + pad);
    let points = opts.rate_points.max(2);
    let rate_grid = (0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let j = rate_function(model, x);
            (x, j.is_finite().then_some(j))
        })
        .collect();
    let negative_witness = kappa.and_then(|k| {
        lambda_grid
            .iter()
            .filter(|(l, _)| *l > 0.0)
            .min_by(|a, b| (a.0 - k.kappa / 2.0).abs().total_cmp(&(b.0 - k.kappa / 2.0).abs()))
            .copied()
    });
    Ok(SpectrumReport {
        model: ModelSpec::from(model),
        mean_log_rho: model.mean_log_rho(),
        slope_range: (xmin, xmax),
        lambda_grid,
        kappa_root: kappa,
        kappa_via_rate: kappa_via_rate(model),
        rate_grid,
        negative_witness,
        speed: speed(model, opts.speed_depth, opts.speed_replicas, opts.seed)?,
    })
}

/// Tolerances for the report invariants.
pub const CONVEXITY_TOL: f64 = 1e-9;
pub const DUALITY_TOL: f64 = 1e-4;
pub const SIGN_GAP: f64 = 1e-6;

impl SpectrumReport {
    /// Names of violated invariants; empty when everything holds.
    pub fn invariant_breaches(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(&(l0, v0)) = self.lambda_grid.first() {
            if l0 == 0.0 && v0 != 0.0 {
                out.push(format!("Lambda(0) = {v0}, expected 0"));
            }
        }
        for w in self.lambda_grid.windows(3) {
            let d2 = w[2].1 - 2.0 * w[1].1 + w[0].1;
            if d2 < -CONVEXITY_TOL {
                out.push(format!("Lambda not convex at lambda = {} (second difference {d2})", w[1].0));
            }
        }
        if let Some(k) = self.kappa_root {
            let gap = (k.kappa - self.kappa_via_rate.kappa).abs();
            if !(gap <= DUALITY_TOL) {
                out.push(format!(
                    "kappa duality gap {gap} (root {} vs rate {})",
                    k.kappa, self.kappa_via_rate.kappa
                ));
            }
            for &(lam, v) in self.lambda_grid.iter().filter(|(l, _)| *l > 0.0) {
                if (lam - k.kappa).abs() > SIGN_GAP && (v > 0.0) != (lam > k.kappa) {
                    out.push(format!("sign of Lambda({lam}) = {v} disagrees with lambda - kappa"));
                }
            }
        }
        for &(x, j) in &self.rate_grid {
            if let Some(j) = j {
                if j < 0.0 {
                    out.push(format!("J({x}) = {j} is negative"));
                }
            }
        }
        out
    }
}
