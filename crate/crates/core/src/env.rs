//! Stationary environment models and their two-sided realizations.
//!
//! A model is either i.i.d. over a finite support or a finite-state Markov
//! chain on the support. Realizations are lazily materialized and every
//! value is a pure function of `(model, seed, site)`.

use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{unit_f64, Domain, SiteStream};
use crate::spectrum;

const ROW_SUM_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-10;
/// `E log rho` must be below `-TRANSIENCE_TOL` and `Lambda(1)` above `-BOUNDARY_TOL`.
const TRANSIENCE_TOL: f64 = 1e-12;
pub(crate) const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    IidTwoPoint,
    IidDiscrete,
    MarkovFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentModel {
    kind: ModelKind,
    support: Vec<f64>,
    /// One row for i.i.d. kinds, transition rows for Markov models.
    weights: Vec<Vec<f64>>,
    stationary: Option<Vec<f64>>,
    master_seed: u64,
}

/// Quantities behind the zero-speed admissibility gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub mean_log_rho: f64,
    pub lambda_one: f64,
    /// A `(lambda, Lambda(lambda))` pair with `lambda > 0` and the most negative value found.
    pub negative_probe: (f64, f64),
}

impl Admissibility {
    pub fn check(&self) -> Result<()> {
        if self.mean_log_rho >= -TRANSIENCE_TOL {
            return Err(Error::NotTransient {
                mean_log_rho: self.mean_log_rho,
            });
        }
        if self.lambda_one < -BOUNDARY_TOL {
            return Err(Error::Ballistic {
                lambda_one: self.lambda_one,
            });
        }
        if self.negative_probe.1 >= 0.0 {
            return Err(Error::NoNegativeLambda);
        }
        Ok(())
    }
}

fn check_omega(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 && w < 1.0 {
        Ok(())
    } else {
        Err(Error::OmegaOutOfRange { value: w })
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if p.is_finite() && p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange { name, value: p })
    }
}

fn check_row(row_index: usize, row: &[f64]) -> Result<()> {
    for &w in row {
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidWeight {
                row: row_index,
                value: w,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(Error::WeightsNotNormalized {
            row: row_index,
            sum,
        });
    }
    Ok(())
}

impl EnvironmentModel {
    /// I.i.d. sites equal to `omega_lo` with probability `q` and `omega_hi` otherwise.
    pub fn make_iid_two_point(omega_hi: f64, omega_lo: f64, q: f64, master_seed: u64) -> Result<Self> {
        let model = Self::iid_two_point_unchecked(omega_hi, omega_lo, q, master_seed)?;
        model.admissibility().check()?;
        Ok(model)
    }

    pub fn iid_two_point_unchecked(omega_hi: f64, omega_lo: f64, q: f64, master_seed: u64) -> Result<Self> {
        check_omega(omega_hi)?;
        check_omega(omega_lo)?;
        check_probability("q", q)?;
        let mut model = Self::iid_unchecked(vec![omega_lo, omega_hi], vec![q, 1.0 - q], master_seed)?;
        model.kind = ModelKind::IidTwoPoint;
        Ok(model)
    }

    pub fn make_iid_discrete(support: Vec<f64>, weights: Vec<f64>, master_seed: u64) -> Result<Self> {
        let model = Self::iid_unchecked(support, weights, master_seed)?;
        model.admissibility().check()?;
        Ok(model)
    }

    /// Structural validation only; the zero-speed gate is skipped.
    pub fn iid_unchecked(support: Vec<f64>, weights: Vec<f64>, master_seed: u64) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} support values vs {} weights",
                support.len(),
                weights.len()
            )));
        }
        support.iter().try_for_each(|&w| check_omega(w))?;
        check_row(0, &weights)?;
        Ok(Self {
            kind: ModelKind::IidDiscrete,
            support,
            weights: vec![weights],
            stationary: None,
            master_seed,
        })
    }

    /// Constant environment `omega_i = omega`. Never admissible; used for ballistic sanity runs.
    pub fn constant(omega: f64, master_seed: u64) -> Result<Self> {
        Self::iid_unchecked(vec![omega], vec![1.0], master_seed)
    }

    /// Stationary two-sided Markov environment on `omega_states`.
    pub fn make_markov_finite(omega_states: Vec<f64>, transition: Matrix, master_seed: u64) -> Result<Self> {
        let model = Self::markov_unchecked(omega_states, transition, master_seed)?;
        model.admissibility().check()?;
        Ok(model)
    }

    /// Validates the chain (stochastic, irreducible, aperiodic) and computes its
    /// stationary law, but skips the zero-speed gate.
    pub fn markov_unchecked(omega_states: Vec<f64>, transition: Matrix, master_seed: u64) -> Result<Self> {
        let n = omega_states.len();
        if n == 0 || transition.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "transition must be {n}x{n} for {n} states"
            )));
        }
        omega_states.iter().try_for_each(|&w| check_omega(w))?;
        for (i, row) in transition.iter().enumerate() {
            check_row(i, row)?;
        }
        linalg::check_irreducible(&transition)?;
        let period = linalg::period(&transition);
        if period != 1 {
            return Err(Error::Periodic { period });
        }
        let (pi, residual) = linalg::stationary_distribution(&transition)?;
        if residual > STATIONARY_TOL || pi.iter().any(|&p| p <= 0.0) {
            return Err(Error::StationaryResidual { residual });
        }
        Ok(Self {
            kind: ModelKind::MarkovFinite,
            support: omega_states,
            weights: transition,
            stationary: Some(pi),
            master_seed,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn is_markov(&self) -> bool {
        self.kind == ModelKind::MarkovFinite
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self {
            master_seed,
            ..self.clone()
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn rho_values(&self) -> Vec<f64> {
        self.support.iter().map(|w| (1.0 - w) / w).collect()
    }

    pub fn log_rho_values(&self) -> Vec<f64> {
        self.support.iter().map(|w| ((1.0 - w) / w).ln()).collect()
    }

    /// Marginal law of a single site: the weights for i.i.d. models, the
    /// stationary distribution for Markov models.
    pub fn marginal(&self) -> &[f64] {
        self.stationary.as_deref().unwrap_or(&self.weights[0])
    }

    pub fn stationary_dist(&self) -> Option<&[f64]> {
        self.stationary.as_deref()
    }

    /// Transition matrix; for i.i.d. models every row equals the weights.
    pub fn transition(&self) -> Matrix {
        match self.kind {
            ModelKind::MarkovFinite => self.weights.clone(),
            _ => vec![self.weights[0].clone(); self.support.len()],
        }
    }

    pub fn iid_weights(&self) -> Option<&[f64]> {
        (!self.is_markov()).then(|| self.weights[0].as_slice())
    }

    /// Time-reversed kernel `P^_{ij} = pi_j P_{ji} / pi_i`.
    pub fn reversed_transition(&self) -> Matrix {
        let p = self.transition();
        let pi = self.marginal();
        let n = p.len();
        (0..n)
            .map(|i| (0..n).map(|j| pi[j] * p[j][i] / pi[i]).collect())
            .collect()
    }

    pub fn mean_log_rho(&self) -> f64 {
        self.marginal()
            .iter()
            .zip(self.log_rho_values())
            .map(|(p, l)| p * l)
            .sum()
    }

    pub fn admissibility(&self) -> Admissibility {
        let mut negative_probe = (1.0, spectrum::lambda_fn(self, 1.0));
        let mut lam = 1.0;
        for _ in 0..60 {
            lam *= 0.5;
            let v = spectrum::lambda_fn(self, lam);
            if v < negative_probe.1 {
                negative_probe = (lam, v);
            }
            if v < 0.0 && lam < 0.25 {
                break;
            }
        }
        Admissibility {
            mean_log_rho: self.mean_log_rho(),
            lambda_one: spectrum::lambda_fn(self, 1.0),
            negative_probe,
        }
    }

    pub fn is_admissible(&self) -> bool {
        self.admissibility().check().is_ok()
    }

    pub fn realize(&self) -> EnvironmentRealization {
        EnvironmentRealization::new(self.clone())
    }

    pub fn realize_with_seed(&self, seed: u64) -> EnvironmentRealization {
        EnvironmentRealization::new(self.with_seed(seed))
    }
}

/// JSON model description: `{"kind", "omega_states", "weights" | "transition", "seed"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub omega_states: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Matrix>,
    #[serde(default)]
    pub seed: u64,
    /// Skip the zero-speed admissibility gate (ballistic sanity models).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub bypass_admissibility: bool,
}

impl ModelSpec {
    pub fn build(&self) -> Result<EnvironmentModel> {
        let model = match self.kind {
            ModelKind::IidTwoPoint | ModelKind::IidDiscrete => {
                let weights = self
                    .weights
                    .clone()
                    .ok_or_else(|| Error::Config("i.i.d. model requires `weights`".into()))?;
                if self.kind == ModelKind::IidTwoPoint {
                    if self.omega_states.len() != 2 || weights.len() != 2 {
                        return Err(Error::Config(
                            "iid_two_point requires two omega_states and two weights".into(),
                        ));
                    }
                    check_probability("q", weights[0])?;
                    let mut m = EnvironmentModel::iid_unchecked(self.omega_states.clone(), weights, self.seed)?;
                    m.kind = ModelKind::IidTwoPoint;
                    m
                } else {
                    EnvironmentModel::iid_unchecked(self.omega_states.clone(), weights, self.seed)?
                }
            }
            ModelKind::MarkovFinite => {
                let transition = self
                    .transition
                    .clone()
                    .ok_or_else(|| Error::Config("markov_finite requires `transition`".into()))?;
                EnvironmentModel::markov_unchecked(self.omega_states.clone(), transition, self.seed)?
            }
        };
        if !self.bypass_admissibility {
            model.admissibility().check()?;
        }
        Ok(model)
    }
}

impl From<&EnvironmentModel> for ModelSpec {
    fn from(m: &EnvironmentModel) -> Self {
        ModelSpec {
            kind: m.kind,
            omega_states: m.support.clone(),
            weights: (!m.is_markov()).then(|| m.weights[0].clone()),
            transition: m.is_markov().then(|| m.weights.clone()),
            seed: m.master_seed,
            bypass_admissibility: !m.is_admissible(),
        }
    }
}

fn cdf(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = row
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

#[inline]
fn sample_index(cdf: &[f64], word: u64) -> usize {
    let u = unit_f64(word);
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

#[derive(Debug, Default)]
struct StateCache {
    /// states of sites 0, 1, 2, ..
    right: Vec<u32>,
    /// states of sites -1, -2, ..
    left: Vec<u32>,
}

/// One fixed environment, lazily materialized in both directions.
#[derive(Debug)]
pub struct EnvironmentRealization {
    model: EnvironmentModel,
    stream: SiteStream,
    omega: Vec<f64>,
    rho: Vec<f64>,
    /// marginal cdf (i.i.d. draws and the Markov site 0)
    marginal_cdf: Vec<f64>,
    forward_cdf: Vec<Vec<f64>>,
    backward_cdf: Vec<Vec<f64>>,
    cache: RwLock<StateCache>,
}

impl Clone for EnvironmentRealization {
    fn clone(&self) -> Self {
        Self::new(self.model.clone())
    }
}

const MIN_CHUNK: usize = 1024;

impl EnvironmentRealization {
    pub fn new(model: EnvironmentModel) -> Self {
        let stream = SiteStream::new(model.master_seed, Domain::Environment);
        let marginal_cdf = cdf(model.marginal());
        let (forward_cdf, backward_cdf) = if model.is_markov() {
            (
                model.transition().iter().map(|r| cdf(r)).collect(),
                model.reversed_transition().iter().map(|r| cdf(r)).collect(),
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Self {
            omega: model.support.clone(),
            rho: model.rho_values(),
            stream,
            marginal_cdf,
            forward_cdf,
            backward_cdf,
            cache: RwLock::new(StateCache::default()),
            model,
        }
    }

    pub fn model(&self) -> &EnvironmentModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.model.master_seed
    }

    fn extend_markov(&self, site: i64) {
        let mut cache = self.cache.write().expect("environment cache poisoned");
        if cache.right.is_empty() {
            cache.right.push(sample_index(&self.marginal_cdf, self.stream.word(0)) as u32);
        }
        if site >= 0 {
            let need = site as usize + 1;
            let have = cache.right.len();
            if need <= have {
                return;
            }
            let target = need.max(2 * have).max(MIN_CHUNK);
            let mut words = vec![0u64; target - have];
            self.stream.fill(have as i64, &mut words);
            let mut prev = *cache.right.last().unwrap() as usize;
            for w in words {
                prev = sample_index(&self.forward_cdf[prev], w);
                cache.right.push(prev as u32);
            }
        } else {
            let need = (-site) as usize;
            let have = cache.left.len();
            if need <= have {
                return;
            }
            let target = need.max(2 * have).max(MIN_CHUNK);
            // words for sites -(have+1) down to -target
            let mut words = vec![0u64; target - have];
            self.stream.fill(-(target as i64), &mut words);
            let mut prev = cache.left.last().copied().unwrap_or(cache.right[0]) as usize;
            for w in words.into_iter().rev() {
                prev = sample_index(&self.backward_cdf[prev], w);
                cache.left.push(prev as u32);
            }
        }
    }

    fn markov_states(&self, lo: i64, hi: i64) -> Vec<usize> {
        {
            let cache = self.cache.read().expect("environment cache poisoned");
            let covered = |s: i64| {
                if s >= 0 {
                    (s as usize) < cache.right.len()
                } else {
                    ((-s) as usize) <= cache.left.len()
                }
            };
            if !(covered(lo) && covered(hi - 1)) {
                drop(cache);
                self.extend_markov(lo);
                self.extend_markov(hi - 1);
            }
        }
        let cache = self.cache.read().expect("environment cache poisoned");
        (lo..hi)
            .map(|s| {
                if s >= 0 {
                    cache.right[s as usize] as usize
                } else {
                    cache.left[(-s - 1) as usize] as usize
                }
            })
            .collect()
    }

    /// Support indices of sites `lo..hi`.
    pub fn states(&self, lo: i64, hi: i64) -> Vec<usize> {
        if hi <= lo {
            return Vec::new();
        }
        if self.model.is_markov() {
            return self.markov_states(lo, hi);
        }
        if self.omega.len() == 1 {
            return vec![0; (hi - lo) as usize];
        }
        let mut words = vec![0u64; (hi - lo) as usize];
        self.stream.fill(lo, &mut words);
        words
            .into_iter()
            .map(|w| sample_index(&self.marginal_cdf, w))
            .collect()
    }

    pub fn state_at(&self, site: i64) -> usize {
        self.states(site, site + 1)[0]
    }

    pub fn omega_at(&self, site: i64) -> f64 {
        self.omega[self.state_at(site)]
    }

    pub fn rho_at(&self, site: i64) -> f64 {
        self.rho[self.state_at(site)]
    }

    /// `omega` for the sites `lo..hi`.
    pub fn omega_range(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.states(lo, hi).into_iter().map(|k| self.omega[k]).collect()
    }

    pub fn rho_range(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.states(lo, hi).into_iter().map(|k| self.rho[k]).collect()
    }

    /// `rho_0, rho_{-1}, .., rho_{-(n-1)}`: the order used by the branching process and `R`.
    pub fn rho_leftward(&self, n: usize) -> Vec<f64> {
        let mut v = self.rho_range(-(n as i64) + 1, 1);
        v.reverse();
        v
    }
}

pub fn rho_of(omega: f64) -> f64 {
    (1.0 - omega) / omega
}
