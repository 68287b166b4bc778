use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::branching::simulate_z_seeded;
use crate::env::EnvironmentModel;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Domain};
use crate::spectrum::kappa_root;
use crate::stats::{self, fit_line};
use crate::walk::{hitting_time_seeded, run_to_time_seeded};

/// Default multiple of `n^(1/kappa)` after which a hitting run is abandoned.
pub const DEFAULT_STEP_CAP_FACTOR: f64 = 1000.0;
/// Offset of the two bracket exponents from `kappa`.
pub const BRACKET_OFFSET: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    Ok,
    /// `X_n <= 0`; the statistic uses `max(X_n, 1)`.
    Nonpositive,
    /// The step cap was reached; the statistic is right-censored at the cap.
    Capped,
    /// The population bound was crossed; the statistic is censored at the bound.
    Overflow,
}

impl RowFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            RowFlag::Ok => "ok",
            RowFlag::Nonpositive => "nonpositive",
            RowFlag::Capped => "capped",
            RowFlag::Overflow => "overflow",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ok" => RowFlag::Ok,
            "nonpositive" => RowFlag::Nonpositive,
            "capped" => RowFlag::Capped,
            "overflow" => RowFlag::Overflow,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub size: u64,
    pub replica: u64,
    /// `log(observable) / log(size)`.
    pub statistic: f64,
    pub flag: RowFlag,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub size: u64,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub flagged: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Ok,
    /// Two grid points: the slope has no residual degrees of freedom.
    LowConfidence,
    /// One grid point: no slope.
    InsufficientGrid,
}

/// Least-squares line through `(log n, median statistic * log n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: Option<f64>,
}

/// Empirical `P(n^-alpha X_n > 1)` at one size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketProbe {
    pub size: u64,
    pub alpha: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub experiment: ExperimentKind,
    pub model_id: String,
    pub rows: Vec<ScalingRow>,
    pub summary: Vec<SizeSummary>,
    pub fit_status: FitStatus,
    pub fit: Option<ExponentFit>,
    /// `kappa` from the root finder, when the model has one.
    pub kappa: Option<f64>,
    /// Value the slope should approach: `kappa` for the walk, `1/kappa` otherwise.
    pub target_exponent: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub brackets: Vec<BracketProbe>,
}

impl ScalingResult {
    pub fn median_at(&self, size: u64) -> Option<f64> {
        self.summary.iter().find(|s| s.size == size).map(|s| s.median)
    }

    pub fn last_median(&self) -> Option<f64> {
        self.summary.last().map(|s| s.median)
    }
}

/// Per-size medians and quartiles of the statistic, in grid order.
pub fn summarize(rows: &[ScalingRow]) -> Vec<SizeSummary> {
    let mut sizes: Vec<u64> = rows.iter().map(|r| r.size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|size| {
            let here: Vec<&ScalingRow> = rows.iter().filter(|r| r.size == size).collect();
            let values: Vec<f64> = here.iter().map(|r| r.statistic).collect();
            let sorted = stats::sorted(&values);
            SizeSummary {
                size,
                count: values.len(),
                median: stats::quantile_sorted(&sorted, 0.5),
                q1: stats::quantile_sorted(&sorted, 0.25),
                q3: stats::quantile_sorted(&sorted, 0.75),
                flagged: here.iter().filter(|r| r.flag != RowFlag::Ok).count(),
            }
        })
        .collect()
}

pub fn fit_exponent(summary: &[SizeSummary]) -> (FitStatus, Option<ExponentFit>) {
    let xs: Vec<f64> = summary.iter().map(|s| (s.size as f64).ln()).collect();
    let ys: Vec<f64> = summary.iter().zip(&xs).map(|(s, x)| s.median * x).collect();
    let status = match summary.len() {
        0 | 1 => FitStatus::InsufficientGrid,
        2 => FitStatus::LowConfidence,
        _ => FitStatus::Ok,
    };
    let fit = fit_line(&xs, &ys).map(|f| ExponentFit {
        slope: f.slope,
        intercept: f.intercept,
        stderr: f.slope_stderr,
    });
    (status, fit)
}

/// Difference of two fitted slopes relative to their combined standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeComparison {
    pub difference: f64,
    pub combined_stderr: Option<f64>,
    /// `|difference| <= 2 * combined_stderr`; false when either error is unknown.
    pub agree: bool,
}

pub fn compare_slopes(a: &ScalingResult, b: &ScalingResult) -> Option<SlopeComparison> {
    let (fa, fb) = (a.fit?, b.fit?);
    let difference = fa.slope - fb.slope;
    let combined_stderr = match (fa.stderr, fb.stderr) {
        (Some(x), Some(y)) => Some(x.hypot(y)),
        _ => None,
    };
    Some(SlopeComparison {
        difference,
        combined_stderr,
        agree: combined_stderr.is_some_and(|se| difference.abs() <= 2.0 * se),
    })
}

struct Sample {
    statistic: f64,
    flag: RowFlag,
    /// Raw observable for the bracket probes.
    raw: f64,
}

fn check_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<()> {
    config.validate()?;
    if config.experiment != kind {
        return Err(Error::Config(format!(
            "config is for `{}`, not `{}`",
            config.experiment.name(),
            kind.name()
        )));
    }
    Ok(())
}

fn run_replicas<F>(config: &ExperimentConfig, sample: F) -> Vec<(u64, u64, Sample)>
where
    F: Fn(u64, u64) -> Sample + Sync,
{
    let jobs: Vec<(u64, u64)> = config
        .sizes
        .iter()
        .flat_map(|&n| (0..config.replicas as u64).map(move |r| (n, r)))
        .collect();
    jobs.into_par_iter()
        .map(|(n, r)| (n, r, sample(n, config.replica_seed(n, r))))
        .collect()
}

fn assemble(
    config: &ExperimentConfig,
    samples: &[(u64, u64, Sample)],
    kappa: Option<f64>,
    target_exponent: Option<f64>,
    brackets: Vec<BracketProbe>,
) -> ScalingResult {
    let rows: Vec<ScalingRow> = samples
        .iter()
        .map(|(size, replica, s)| ScalingRow {
            size: *size,
            replica: *replica,
            statistic: s.statistic,
            flag: s.flag,
        })
        .collect();
    let summary = summarize(&rows);
    let (fit_status, fit) = fit_exponent(&summary);
    ScalingResult {
        experiment: config.experiment,
        model_id: config.model_id(),
        rows,
        summary,
        fit_status,
        fit,
        kappa,
        target_exponent,
        brackets,
    }
}

fn env_seed(replica_seed: u64) -> u64 {
    derive_seed(replica_seed, &[Domain::EnvironmentSeed as u64])
}

fn kappa_of(model: &EnvironmentModel) -> Option<f64> {
    kappa_root(model).ok().map(|k| k.kappa)
}

/// Replicas of `log max(X_n, 1) / log n`, each in a fresh environment.
pub fn run_walk_exponent(config: &ExperimentConfig) -> Result<ScalingResult> {
    check_kind(config, ExperimentKind::WalkExponent)?;
    let model = config.build_model()?;
    let samples = run_replicas(config, |n, seed| {
        let env = model.realize_with_seed(env_seed(seed));
        let x = run_to_time_seeded(&env, n, seed).position;
        Sample {
            statistic: (x.max(1) as f64).ln() / (n as f64).ln(),
            flag: if x <= 0 { RowFlag::Nonpositive } else { RowFlag::Ok },
            raw: x as f64,
        }
    });
    let kappa = kappa_of(&model);
    let mut brackets = Vec::new();
    if let Some(k) = kappa {
        for alpha in [k - BRACKET_OFFSET, k + BRACKET_OFFSET] {
            for &n in &config.sizes {
                let here: Vec<f64> = samples.iter().filter(|s| s.0 == n).map(|s| s.2.raw).collect();
                let scale = (n as f64).powf(alpha);
                let hits = here.iter().filter(|&&x| x > scale).count();
                brackets.push(BracketProbe {
                    size: n,
                    alpha,
                    fraction: hits as f64 / here.len() as f64,
                });
            }
        }
    }
    Ok(assemble(config, &samples, kappa, kappa, brackets))
}

/// Step budget for a hitting run at `target`.
pub fn step_cap(config: &ExperimentConfig, kappa: Option<f64>, target: u64) -> u64 {
    let factor = config.step_cap_factor.unwrap_or(DEFAULT_STEP_CAP_FACTOR);
    let exponent = 1.0 / kappa.unwrap_or(1.0).clamp(1e-3, 1.0);
    let cap = factor * (target as f64).powf(exponent);
    if cap >= u64::MAX as f64 {
        u64::MAX
    } else {
        cap as u64
    }
}

/// Replicas of `log T_n / log n`. Capped runs are kept, censored at the cap.
pub fn run_hitting_exponent(config: &ExperimentConfig) -> Result<ScalingResult> {
    check_kind(config, ExperimentKind::HittingExponent)?;
    let model = config.build_model()?;
    let kappa = kappa_of(&model);
    if config.sizes.iter().any(|&n| n > i64::MAX as u64) {
        return Err(Error::Config("target does not fit in a site index".into()));
    }
    let samples = run_replicas(config, |n, seed| {
        let env = model.realize_with_seed(env_seed(seed));
        let cap = step_cap(config, kappa, n);
        let rec = hitting_time_seeded(&env, n as i64, cap, seed);
        let (t, flag) = match rec.hitting_time {
            Some(t) => (t, RowFlag::Ok),
            None => (rec.steps, RowFlag::Capped),
        };
        Sample {
            statistic: (t as f64).ln() / (n as f64).ln(),
            flag,
            raw: t as f64,
        }
    });
    Ok(assemble(config, &samples, kappa, kappa.map(|k| 1.0 / k), Vec::new()))
}

/// Replicas of `log(1 + sum_{i<=n} Z_i) / log n`, each in a fresh environment.
pub fn run_zsum_exponent(config: &ExperimentConfig) -> Result<ScalingResult> {
    check_kind(config, ExperimentKind::ZsumExponent)?;
    let model = config.build_model()?;
    let kappa = kappa_of(&model);
    if config.sizes.iter().any(|&n| n > usize::MAX as u64 / 2) {
        return Err(Error::Config("generation count too large".into()));
    }
    let samples = run_replicas(config, |n, seed| {
        let env = model.realize_with_seed(env_seed(seed));
        let path = simulate_z_seeded(&env, n as usize, seed);
        let total = path.total() as f64;
        Sample {
            statistic: (1.0 + total).ln() / (n as f64).ln(),
            flag: if path.overflowed { RowFlag::Overflow } else { RowFlag::Ok },
            raw: total,
        }
    });
    Ok(assemble(config, &samples, kappa, kappa.map(|k| 1.0 / k), Vec::new()))
}

pub fn run_scaling(config: &ExperimentConfig) -> Result<ScalingResult> {
    match config.experiment {
        ExperimentKind::WalkExponent => run_walk_exponent(config),
        ExperimentKind::HittingExponent => run_hitting_exponent(config),
        ExperimentKind::ZsumExponent => run_zsum_exponent(config),
        other => Err(Error::Config(format!("`{}` is not a scaling experiment", other.name()))),
    }
}
