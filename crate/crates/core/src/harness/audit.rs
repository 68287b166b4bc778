use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind};
use crate::branching::{b_recursion, b_summed, log_b_of, phi_product_of, psi_exact};
use crate::error::{Error, Result};
use crate::rng::{trajectory_rng, Domain};
use crate::spectrum::kappa_root;

pub const DEFAULT_AUDIT_CASES: usize = 1000;
pub const MAX_AUDIT_N: usize = 100;
pub const LEMMA_TOL: f64 = 1e-10;
pub const GAP_TOL: f64 = 1e-11;
pub const RATIO_FORM_TOL: f64 = 1e-10;
pub const UNIT_TOL: f64 = 1e-10;
const S_GRID: [f64; 7] = [0.0, 0.1, 0.5, 0.9, 0.99, 0.999, 1.0];
const SCALING_LAMBDAS: [f64; 3] = [0.5, 1.0, 2.0];

/// `B_n(s)` from `rho_0 .. rho_{n-1}` by the three-term recursion.
pub type RecursionFn = fn(&[f64], usize, f64) -> Result<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditCheck {
    /// `|phi_n(s) B_n(s) - 1|`.
    Lemma,
    /// Relative gap between the recursive and summed forms of `B_n(s)`.
    RecursionVsSummed,
    /// Relative gap between `phi_n(s)` and `exp(-log B_n(s))` from the ratio form.
    RatioForm,
    /// Largest decrease of `phi_n` along increasing `s`.
    Monotone,
    /// Number of ratios `B_k / B_{k+1}` outside `(0, 1]`.
    RatioRange,
    /// Largest deviation of `phi`, `psi` and `1/B` from 1 at `s = 1`.
    UnitColumn,
}

impl AuditCheck {
    pub const ALL: [AuditCheck; 6] = [
        AuditCheck::Lemma,
        AuditCheck::RecursionVsSummed,
        AuditCheck::RatioForm,
        AuditCheck::Monotone,
        AuditCheck::RatioRange,
        AuditCheck::UnitColumn,
    ];

    pub fn tolerance(self) -> f64 {
        match self {
            AuditCheck::Lemma => LEMMA_TOL,
            AuditCheck::RecursionVsSummed => GAP_TOL,
            AuditCheck::RatioForm => RATIO_FORM_TOL,
            AuditCheck::Monotone => 1e-15,
            AuditCheck::RatioRange => 0.0,
            AuditCheck::UnitColumn => UNIT_TOL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AuditCheck::Lemma => "lemma",
            AuditCheck::RecursionVsSummed => "recursion_vs_summed",
            AuditCheck::RatioForm => "ratio_form",
            AuditCheck::Monotone => "monotone",
            AuditCheck::RatioRange => "ratio_range",
            AuditCheck::UnitColumn => "unit_column",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub check: AuditCheck,
    pub passed: usize,
    pub failed: usize,
    pub worst: f64,
}

/// First failing evaluation, with enough context to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub case: usize,
    pub check: AuditCheck,
    pub n: usize,
    pub s: f64,
    pub value: f64,
    pub env_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditCase {
    pub case: usize,
    pub n: usize,
    pub env_seed: u64,
    /// Worst lemma error over the s-grid.
    pub worst_lemma: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenfnAuditReport {
    pub model_id: String,
    pub cases: Vec<AuditCase>,
    pub tallies: Vec<CheckTally>,
    pub counterexample: Option<Counterexample>,
}

impl GenfnAuditReport {
    pub fn passed(&self) -> bool {
        self.tallies.iter().all(|t| t.failed == 0)
    }

    pub fn tally(&self, check: AuditCheck) -> Option<&CheckTally> {
        self.tallies.iter().find(|t| t.check == check)
    }

    pub fn invariant_breaches(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .tallies
            .iter()
            .filter(|t| t.failed > 0)
            .map(|t| format!("{}: {} failures, worst {:e}", t.check.name(), t.failed, t.worst))
            .collect();
        if let Some(c) = &self.counterexample {
            out.push(format!(
                "first counterexample: case {} check {} n = {} s = {} value = {:e} env_seed = {}",
                c.case,
                c.check.name(),
                c.n,
                c.s,
                c.value,
                c.env_seed
            ));
        }
        out
    }
}

struct Evaluation {
    check: AuditCheck,
    s: f64,
    value: f64,
}

fn ratios_in_range(rhos: &[f64], s: f64) -> usize {
    let mut q = 1.0;
    let mut bad = 0;
    for &rho in rhos {
        q = 1.0 / (1.0 + rho * (1.0 - s * q));
        if !(q > 0.0 && q <= 1.0) {
            bad += 1;
        }
    }
    bad
}

fn relative(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

fn audit_case(rhos: &[f64], s_grid: &[f64], psi_unit: f64, recursion: RecursionFn) -> Vec<Evaluation> {
    let n = rhos.len();
    let mut out = Vec::new();
    let mut prev_phi: Option<f64> = None;
    let mut push = |check, s, value: f64| {
        out.push(Evaluation {
            check,
            s,
            value: if value.is_nan() { f64::INFINITY } else { value },
        })
    };
    for &s in s_grid {
        let phi = phi_product_of(rhos, s);
        let (b_rec, b_sum) = match (recursion(rhos, n, s), b_summed(rhos, n, s)) {
            (Ok(a), Ok(b)) => (a, b),
            _ => (f64::INFINITY, f64::INFINITY),
        };
        push(AuditCheck::Lemma, s, (phi * b_rec - 1.0).abs());
        push(AuditCheck::RecursionVsSummed, s, relative(b_rec, b_sum));
        push(AuditCheck::RatioForm, s, relative((-log_b_of(rhos, s)).exp(), phi));
        push(AuditCheck::RatioRange, s, ratios_in_range(rhos, s) as f64);
        if let Some(p) = prev_phi {
            push(AuditCheck::Monotone, s, (p - phi).max(0.0));
        }
        prev_phi = Some(phi);
        if s == 1.0 {
            let unit = (phi - 1.0).abs().max((1.0 / b_rec - 1.0).abs()).max((psi_unit - 1.0).abs());
            push(AuditCheck::UnitColumn, s, unit);
        }
    }
    out
}

/// Invariant suite over randomized `(environment, n, s)` instances.
pub fn run_genfn_audit(config: &ExperimentConfig) -> Result<GenfnAuditReport> {
    run_genfn_audit_with(config, b_recursion)
}

/// As [`run_genfn_audit`], with the three-term recursion supplied by the caller.
pub fn run_genfn_audit_with(config: &ExperimentConfig, recursion: RecursionFn) -> Result<GenfnAuditReport> {
    config.validate()?;
    if config.experiment != ExperimentKind::GenfnAudit {
        return Err(Error::Config(format!(
            "config is for `{}`, not `genfn_audit`",
            config.experiment.name()
        )));
    }
    let model = config.build_model()?;
    let kappa = kappa_root(&model).ok().map(|k| k.kappa);
    let cases = config.audit_cases.unwrap_or(DEFAULT_AUDIT_CASES);
    let max_n = config
        .sizes
        .last()
        .map_or(MAX_AUDIT_N, |&n| (n as usize).clamp(1, crate::branching::DIRECT_LIMIT));

    let results: Vec<(usize, u64, Vec<Evaluation>)> = (0..cases)
        .into_par_iter()
        .map(|case| {
            let seed = config.replica_seed(max_n as u64, case as u64);
            let mut rng = trajectory_rng(seed, Domain::Replica);
            let n = rng.random_range(1..=max_n);
            let env_seed = rng.random::<u64>();
            let env = model.realize_with_seed(env_seed);
            let rhos = env.rho_range(0, n as i64);
            let mut s_grid = S_GRID.to_vec();
            if let Some(k) = kappa {
                let scale = (n as f64).powf(1.0 / k);
                s_grid.extend(SCALING_LAMBDAS.iter().map(|l| (-l / scale).exp()));
            }
            s_grid.sort_by(f64::total_cmp);
            s_grid.dedup();
            let psi_unit = psi_exact(&env, n, 1.0);
            (n, env_seed, audit_case(&rhos, &s_grid, psi_unit, recursion))
        })
        .collect();

    let mut tallies: Vec<CheckTally> = AuditCheck::ALL
        .iter()
        .map(|&check| CheckTally {
            check,
            passed: 0,
            failed: 0,
            worst: 0.0,
        })
        .collect();
    let mut counterexample = None;
    let mut audit_cases = Vec::with_capacity(cases);
    for (case, (n, env_seed, evals)) in results.into_iter().enumerate() {
        let mut failed = false;
        let mut worst_lemma: f64 = 0.0;
        for e in &evals {
            let tally = tallies.iter_mut().find(|t| t.check == e.check).expect("known check");
            tally.worst = tally.worst.max(e.value);
            if e.check == AuditCheck::Lemma {
                worst_lemma = worst_lemma.max(e.value);
            }
            if e.value <= e.check.tolerance() {
                tally.passed += 1;
            } else {
                tally.failed += 1;
                failed = true;
                if counterexample.is_none() {
                    counterexample = Some(Counterexample {
                        case,
                        check: e.check,
                        n,
                        s: e.s,
                        value: e.value,
                        env_seed,
                    });
                }
            }
        }
        audit_cases.push(AuditCase {
            case,
            n,
            env_seed,
            worst_lemma,
            failed,
        });
    }
    Ok(GenfnAuditReport {
        model_id: config.model_id(),
        cases: audit_cases,
        tallies,
        counterexample,
    })
}
