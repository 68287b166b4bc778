//! Simulation and numerical analysis of transient, zero-speed one-dimensional
//! random walks in random environment.
//!
//! * [`env`]: stationary environment models and reproducible realizations.
//! * [`spectrum`]: `Lambda`, the rate function `J`, `kappa`, speed, moments of `R`.
//! * [`walk`]: the quenched walk, hitting times and left-crossing counts.
//! * [`branching`]: the branching process with immigration and its generating functions.
//! * [`harness`]: scaling experiments, audits, and CSV/JSON output.

pub mod branching;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod rng;
pub mod spectrum;
pub mod stats;
pub mod walk;

pub use env::{EnvironmentModel, EnvironmentRealization, ModelKind, ModelSpec};
pub use error::{Error, Result};
