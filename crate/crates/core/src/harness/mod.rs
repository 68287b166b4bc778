//! Experiment orchestration: seeded, replica-parallel scaling runs, the
//! generating-function audit, and their CSV/JSON emission.
//!
//! Every experiment is a pure function of its configuration. Replicas are
//! seeded from `(seed, model seed, experiment, size, replica)` and gathered
//! in grid order, so output does not depend on the thread pool.

mod audit;
mod config;
mod emit;
mod scaling;

pub use audit::{
    run_genfn_audit, run_genfn_audit_with, AuditCase, AuditCheck, CheckTally, Counterexample, GenfnAuditReport,
    RecursionFn, DEFAULT_AUDIT_CASES, GAP_TOL, LEMMA_TOL, MAX_AUDIT_N,
};
pub use config::{ExperimentConfig, ExperimentKind};
pub use emit::{read_scaling_csv, scaling_csv, ExperimentOutput, Format, CSV_HEADER};
pub use scaling::{
    compare_slopes, fit_exponent, run_hitting_exponent, run_scaling, run_walk_exponent, run_zsum_exponent, step_cap,
    summarize, BracketProbe, ExponentFit, FitStatus, RowFlag, ScalingResult, ScalingRow, SizeSummary,
    SlopeComparison, BRACKET_OFFSET, DEFAULT_STEP_CAP_FACTOR,
};

use crate::error::{Error, Result};
use crate::spectrum::{spectrum_report, SpectrumOptions, SpectrumReport};

/// Default series depth for the speed estimate in a spectrum run.
pub const DEFAULT_TRUNCATION_DEPTH: usize = 1000;

pub fn run_spectrum(config: &ExperimentConfig) -> Result<SpectrumReport> {
    config.validate()?;
    if config.experiment != ExperimentKind::Spectrum {
        return Err(Error::Config(format!(
            "config is for `{}`, not `spectrum`",
            config.experiment.name()
        )));
    }
    let model = config.build_model()?;
    let opts = SpectrumOptions {
        speed_depth: config.truncation_depth.unwrap_or(DEFAULT_TRUNCATION_DEPTH),
        speed_replicas: config.replicas,
        seed: config.replica_seed(0, 0),
        ..SpectrumOptions::default()
    };
    spectrum_report(&model, &opts)
}

/// Dispatch on the configured experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    Ok(match config.experiment {
        ExperimentKind::Spectrum => ExperimentOutput::Spectrum(Box::new(run_spectrum(config)?)),
        ExperimentKind::GenfnAudit => ExperimentOutput::Audit(run_genfn_audit(config)?),
        _ => ExperimentOutput::Scaling(run_scaling(config)?),
    })
}
