//! Branching process with one immigrant per generation, and the generating
//! functions attached to it.
//!
//! `Z_0 = 0` and, given the environment, `Z_{k+1}` is a sum of `Z_k + 1`
//! independent geometric counts with success probability `omega_{-k}`.
//! Its partial sums have the law of the walk's left-crossing totals.
//!
//! The generating-function layer follows the nested product
//! `phi_n(s) = f_0(s) f_{-1}(s f_0(s)) ..` with `f_{-j}(x) = 1 / (1 + rho_j (1 - x))`,
//! its reciprocal polynomials `B_n(s)`, and the ratio form `q_k = B_k / B_{k+1}`
//! used for large `n`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::EnvironmentRealization;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, trajectory_rng, unit_f64, Domain};
use crate::stats;

/// Draws the offspring of a whole generation at once.
pub trait OffspringSampler {
    /// Failures before the `trials`-th success, each trial succeeding with probability `omega`.
    fn sample(&mut self, trials: u64, omega: f64) -> u64;
}

/// Exact negative-binomial sampler: direct geometric sums for few trials,
/// the gamma–Poisson mixture otherwise.
#[derive(Debug, Clone)]
pub struct NegBinomial<R> {
    rng: R,
}

impl<R: Rng> NegBinomial<R> {
    pub fn new(rng: R) -> Self {
        Self { rng }
    }
}

const DIRECT_TRIALS: u64 = 16;

impl<R: Rng> OffspringSampler for NegBinomial<R> {
    fn sample(&mut self, trials: u64, omega: f64) -> u64 {
        if trials <= DIRECT_TRIALS {
            let log_fail = (1.0 - omega).ln();
            return (0..trials)
                .map(|_| {
                    let u = 1.0 - unit_f64(self.rng.next_u64());
                    (u.ln() / log_fail).floor() as u64
                })
                .sum();
        }
        let rho = (1.0 - omega) / omega;
        let rate = Gamma::new(trials as f64, rho)
            .expect("positive gamma parameters")
            .sample(&mut self.rng);
        if rate >= Poisson::<f64>::MAX_LAMBDA {
            return u64::MAX;
        }
        if rate <= 0.0 {
            return 0;
        }
        Poisson::new(rate)
            .expect("valid poisson rate")
            .sample(&mut self.rng) as u64
    }
}

pub const DEFAULT_POPULATION_BOUND: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchingPath {
    /// `Z_0 .. Z_n` (shorter if the population bound was crossed).
    pub z: Vec<u64>,
    /// `sum_{i=1}^k Z_i` for `k = 0..`, saturating.
    pub partial_sums: Vec<u64>,
    pub overflowed: bool,
}

impl BranchingPath {
    /// `sum_{i=1}^n Z_i`.
    pub fn total(&self) -> u64 {
        *self.partial_sums.last().unwrap_or(&0)
    }
}

/// Simulate `Z_0 .. Z_n`; generation `k -> k + 1` uses `omega_{-k}`.
pub fn simulate_z<S: OffspringSampler>(
    realization: &EnvironmentRealization,
    n: usize,
    sampler: &mut S,
    population_bound: u64,
) -> BranchingPath {
    let mut omegas = realization.omega_range(-(n as i64) + 1, 1);
    omegas.reverse();
    let mut z = Vec::with_capacity(n + 1);
    let mut partial_sums = Vec::with_capacity(n + 1);
    z.push(0u64);
    partial_sums.push(0u64);
    let mut overflowed = false;
    for &omega in &omegas {
        let current = *z.last().unwrap();
        let next = sampler.sample(current + 1, omega);
        if next > population_bound {
            overflowed = true;
            break;
        }
        z.push(next);
        partial_sums.push(partial_sums.last().unwrap().saturating_add(next));
    }
    BranchingPath {
        z,
        partial_sums,
        overflowed,
    }
}

pub fn branching_sampler(seed: u64) -> NegBinomial<crate::rng::TrajectoryRng> {
    NegBinomial::new(trajectory_rng(seed, Domain::Branching))
}

pub fn simulate_z_seeded(realization: &EnvironmentRealization, n: usize, seed: u64) -> BranchingPath {
    simulate_z(realization, n, &mut branching_sampler(seed), DEFAULT_POPULATION_BOUND)
}

/// Quenched means `m_k = E_omega Z_k` for `k = 1..n`.
///
/// `m_{k+1} = rho_{-k} (m_k + 1)` with `m_0 = 0`, so
/// `m_k = rho_{-(k-1)} + rho_{-(k-1)} rho_{-(k-2)} + .. + rho_{-(k-1)} .. rho_0`,
/// which by stationarity has the law of `rho_{k-1} + rho_{k-1} rho_{k-2} + ..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanProfile {
    pub means: Vec<f64>,
}

impl MeanProfile {
    /// `m_k`, with `m_0 = 0`.
    pub fn m(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.means[k - 1]
        }
    }
}

pub fn quenched_mean_profile(realization: &EnvironmentRealization, n: usize) -> MeanProfile {
    let rhos = realization.rho_leftward(n);
    let mut m = 0.0;
    let means = rhos
        .iter()
        .map(|rho| {
            m = rho * (m + 1.0);
            m
        })
        .collect();
    MeanProfile { means }
}

/// `f(x) = E x^V = 1 / (1 + rho (1 - x))` for one geometric count with odds `rho`.
#[inline]
pub fn f_step(rho: f64, x: f64) -> f64 {
    1.0 / (1.0 + rho * (1.0 - x))
}

/// Nested product with innermost factor using `rhos[0]`:
/// `f(rhos[0]; s) * f(rhos[1]; s f(rhos[0]; s)) * ..`.
pub fn phi_product_of(rhos: &[f64], s: f64) -> f64 {
    let mut inner = 1.0;
    let mut product = 1.0;
    for (j, &rho) in rhos.iter().enumerate() {
        let factor = if j == 0 { f_step(rho, s) } else { f_step(rho, s * inner) };
        product *= factor;
        inner = factor;
    }
    product
}

/// `phi_n(s)` over `rho_0 .. rho_{n-1}` of the realization.
pub fn phi_product(realization: &EnvironmentRealization, n: usize, s: f64) -> f64 {
    phi_product_of(&realization.rho_range(0, n as i64), s)
}

/// Running state of the ratio recursion `q_k = 1 / (1 + rho_k (1 - s q_{k-1}))`, `q_{-1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenFnState {
    pub s: f64,
    pub ratios: Vec<f64>,
    /// `log B_n = -sum_k log q_k`.
    pub log_b: f64,
}

impl GenFnState {
    pub fn new(s: f64) -> Self {
        assert!((0.0..=1.0).contains(&s), "s must lie in [0, 1]");
        Self {
            s,
            ratios: Vec::new(),
            log_b: 0.0,
        }
    }

    pub fn push(&mut self, rho: f64) {
        let prev = self.ratios.last().copied().unwrap_or(1.0);
        let excess = rho * (1.0 - self.s * prev);
        let q = 1.0 / (1.0 + excess);
        assert!(q > 0.0 && q <= 1.0, "ratio {q} outside (0, 1]");
        self.ratios.push(q);
        self.log_b += excess.ln_1p();
    }
}

pub fn log_b_of(rhos: &[f64], s: f64) -> f64 {
    let mut st = GenFnState::new(s);
    rhos.iter().for_each(|&r| st.push(r));
    st.log_b
}

/// `log B_n(s)` over `rho_0 .. rho_{n-1}`; never overflows.
pub fn log_b(realization: &EnvironmentRealization, n: usize, s: f64) -> f64 {
    log_b_of(&realization.rho_range(0, n as i64), s)
}

pub const DIRECT_LIMIT: usize = 500;

fn check_direct(rhos: &[f64], n: usize) -> Result<()> {
    if n > DIRECT_LIMIT {
        return Err(Error::DirectTooLarge {
            n,
            limit: DIRECT_LIMIT,
        });
    }
    if rhos.len() < n {
        return Err(Error::InvalidArgument(format!(
            "need {n} rho values, got {}",
            rhos.len()
        )));
    }
    Ok(())
}

/// `B_n(s)` by `B_{k+1} = (1 + rho_k) B_k - s rho_k B_{k-1}`, `B_{-1} = B_0 = 1`.
///
/// Evaluated through the increments `D_k = B_k - B_{k-1}`, which satisfy
/// `D_{k+1} = rho_k (D_k + (1 - s) B_{k-1})`. Every term is nonnegative for
/// `s <= 1`; the literal form cancels near `s = 1`, where `B_n` stays close
/// to 1 while the second solution grows like `rho_0 .. rho_{n-1}`.
pub fn b_recursion(rhos: &[f64], n: usize, s: f64) -> Result<f64> {
    check_direct(rhos, n)?;
    let (mut prev, mut cur, mut diff) = (1.0, 1.0, 0.0);
    for (k, &rho) in rhos[..n].iter().enumerate() {
        diff = rho * (diff + (1.0 - s) * prev);
        let next = cur + diff;
        if !next.is_finite() {
            return Err(Error::DirectOverflow { step: k + 1 });
        }
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// `B_n(s)` by `B_{k+1} = B_k + (1 - s) sum_{i=0}^k B_{i-1} prod_{j=i}^k rho_j`.
pub fn b_summed(rhos: &[f64], n: usize, s: f64) -> Result<f64> {
    check_direct(rhos, n)?;
    // b[m] holds B_{m-1}
    let mut b = vec![1.0, 1.0];
    for k in 0..n {
        let mut sum = stats::CompensatedSum::new();
        let mut prod = 1.0;
        for i in (0..=k).rev() {
            prod *= rhos[i];
            sum.add(b[i] * prod);
        }
        let next = b[k + 1] + (1.0 - s) * sum.value();
        if !next.is_finite() {
            return Err(Error::DirectOverflow { step: k + 1 });
        }
        b.push(next);
    }
    Ok(b[n + 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BPair {
    pub recursion: f64,
    pub summed: f64,
}

impl BPair {
    pub fn relative_gap(&self) -> f64 {
        (self.recursion - self.summed).abs() / self.summed.abs()
    }
}

/// `B_n(s)` by both polynomial forms, for cross-checking.
pub fn b_direct(rhos: &[f64], n: usize, s: f64) -> Result<BPair> {
    Ok(BPair {
        recursion: b_recursion(rhos, n, s)?,
        summed: b_summed(rhos, n, s)?,
    })
}

/// Exact quenched `psi_n(s) = E_omega s^{Z_1 + .. + Z_n}`: the nested product over
/// `rho_{-(n-1)}, .., rho_0` (innermost first).
pub fn psi_exact(realization: &EnvironmentRealization, n: usize, s: f64) -> f64 {
    phi_product_of(&realization.rho_range(-(n as i64) + 1, 1), s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `psi_n(s)` at the fixed environment.
pub fn psi_mc(realization: &EnvironmentRealization, n: usize, s: f64, replicas: usize, seed: u64) -> PsiEstimate {
    assert!(replicas >= 1 && (0.0..=1.0).contains(&s));
    let values: Vec<f64> = (0..replicas as u64)
        .into_par_iter()
        .map(|r| {
            let path = simulate_z_seeded(realization, n, derive_seed(seed, &[Domain::Replica as u64, r]));
            if path.overflowed {
                if s == 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                s.powf(path.total() as f64)
            }
        })
        .collect();
    let (mean, stderr) = stats::mean_and_stderr(&values);
    PsiEstimate {
        mean,
        stderr: if stderr.is_nan() { 0.0 } else { stderr },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvironmentModel;
    use approx::assert_relative_eq;

    struct Barren;
    impl OffspringSampler for Barren {
        fn sample(&mut self, _trials: u64, _omega: f64) -> u64 {
            0
        }
    }

    fn iid(support: Vec<f64>, weights: Vec<f64>) -> EnvironmentRealization {
        EnvironmentModel::iid_unchecked(support, weights, 2).unwrap().realize()
    }

    #[test]
    fn barren_offspring_gives_zero_path() {
        let env = iid(vec![1.0 / 3.0, 2.0 / 3.0], vec![0.4, 0.6]);
        let p = simulate_z(&env, 50, &mut Barren, DEFAULT_POPULATION_BOUND);
        assert_eq!(p.z, vec![0; 51]);
        assert_eq!(p.total(), 0);
    }

    #[test]
    fn population_bound_flags_overflow() {
        struct Huge;
        impl OffspringSampler for Huge {
            fn sample(&mut self, _: u64, _: f64) -> u64 {
                1000
            }
        }
        let env = iid(vec![0.5], vec![1.0]);
        let p = simulate_z(&env, 10, &mut Huge, 999);
        assert!(p.overflowed);
        assert_eq!(p.z, vec![0]);
    }

    #[test]
    fn f_step_values() {
        assert_eq!(f_step(2.0, 1.0), 1.0);
        assert_relative_eq!(f_step(2.0, 0.5), 0.5);
        assert_relative_eq!(f_step(2.0, 0.0), 1.0 / 3.0);
    }

    #[test]
    fn phi_small_cases() {
        assert_relative_eq!(phi_product_of(&[2.0], 0.5), 0.5);
        assert_relative_eq!(phi_product_of(&[2.0, 0.5], 0.5), 1.0 / 2.75, epsilon = 1e-15);
        assert_eq!(phi_product_of(&[2.0, 0.5, 3.0, 0.1], 1.0), 1.0);
    }

    #[test]
    fn log_b_small_cases() {
        assert_eq!(log_b_of(&[], 0.3), 0.0);
        assert_relative_eq!(log_b_of(&[2.0], 0.5), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(log_b_of(&[2.0, 0.5], 0.5), 2.75f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn b_direct_small_cases() {
        let p = b_direct(&[2.0, 0.5], 2, 0.5).unwrap();
        assert_relative_eq!(p.recursion, 2.75, epsilon = 1e-15);
        assert_relative_eq!(p.summed, 2.75, epsilon = 1e-15);
        let p = b_direct(&[1.7], 1, 0.3).unwrap();
        assert_relative_eq!(p.recursion, 1.0 + 1.7 * 0.7, epsilon = 1e-15);
        assert_relative_eq!(p.summed, 1.0 + 0.7 * 1.7, epsilon = 1e-15);
        let rhos = [2.0, 0.5, 3.0, 0.25, 7.0];
        let p = b_direct(&rhos, 5, 1.0).unwrap();
        assert_eq!((p.recursion, p.summed), (1.0, 1.0));
    }

    #[test]
    fn b_direct_guards() {
        let rhos = vec![2.0; 600];
        assert!(matches!(
            b_direct(&rhos, 501, 0.0),
            Err(Error::DirectTooLarge { .. })
        ));
        assert!(matches!(
            b_direct(&[1.0], 2, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        let big = vec![1e300; 10];
        assert!(matches!(
            b_recursion(&big, 10, 0.0),
            Err(Error::DirectOverflow { .. })
        ));
    }

    #[test]
    fn log_b_survives_where_b_overflows() {
        let rhos = vec![2.0; 5000];
        let lb = log_b_of(&rhos, 0.0);
        assert!(lb.is_finite() && lb > 700.0);
        assert_eq!(phi_product_of(&rhos, 0.0), 0.0);
    }

    #[test]
    fn mean_profile_small_cases() {
        let env = iid(vec![1.0 / 3.0], vec![1.0]);
        assert_relative_eq!(quenched_mean_profile(&env, 1).m(1), 2.0);
        let env = iid(vec![2.0 / 3.0], vec![1.0]);
        let prof = quenched_mean_profile(&env, 60);
        assert!(prof.means.windows(2).all(|w| w[1] >= w[0]));
        assert!(prof.means[..40].windows(2).all(|w| w[1] > w[0]));
        assert!((prof.m(60) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn psi_at_one_is_one() {
        let env = iid(vec![1.0 / 3.0, 2.0 / 3.0], vec![0.4, 0.6]);
        assert_eq!(psi_mc(&env, 20, 1.0, 50, 4).mean, 1.0);
        assert_eq!(psi_exact(&env, 20, 1.0), 1.0);
    }
}
