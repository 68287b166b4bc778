use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("omega value {value} is not strictly inside (0, 1)")]
    OmegaOutOfRange { value: f64 },

    #[error("probability {value} for `{name}` is not strictly inside (0, 1)")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },

    #[error("row {row} of the weights sums to {sum}, expected 1")]
    WeightsNotNormalized { row: usize, sum: f64 },

    #[error("weight {value} in row {row} is negative or not finite")]
    InvalidWeight { row: usize, value: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transition matrix is reducible (state {unreachable} unreachable from state {from})")]
    Reducible { from: usize, unreachable: usize },

    #[error("transition matrix is periodic with period {period}")]
    Periodic { period: usize },

    #[error("stationary distribution residual {residual} exceeds tolerance")]
    StationaryResidual { residual: f64 },

    #[error("model is not transient to the right: E log rho = {mean_log_rho} is not negative")]
    NotTransient { mean_log_rho: f64 },

    #[error("model is ballistic: Lambda(1) = {lambda_one} < 0, so E rho < 1 and the speed is positive")]
    Ballistic { lambda_one: f64 },

    #[error("no lambda > 0 with Lambda(lambda) < 0 was found")]
    NoNegativeLambda,

    #[error("Lambda(lambda) stays negative up to lambda = {searched_to}; no positive root")]
    NoPositiveRoot { searched_to: f64 },

    #[error("direct polynomial evaluation refused for n = {n} (limit {limit})")]
    DirectTooLarge { n: usize, limit: usize },

    #[error("direct polynomial evaluation overflowed at step {step}")]
    DirectOverflow { step: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
