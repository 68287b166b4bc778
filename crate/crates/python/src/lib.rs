//! Python bindings: model construction, the exponent and rate functions,
//! walk and branching samplers, the generating-function layer, and the
//! experiment harness driven by JSON configs.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rwre::branching;
use rwre::harness::{self, ExperimentConfig};
use rwre::spectrum;
use rwre::walk;
use rwre::{EnvironmentModel, EnvironmentRealization, ModelSpec};

fn to_py(e: rwre::Error) -> PyErr {
    match e {
        rwre::Error::Io { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Stationary environment model.
#[pyclass(name = "Model", module = "rwre_py", frozen)]
struct PyModel {
    inner: EnvironmentModel,
}

#[pymethods]
impl PyModel {
    /// Two-point i.i.d. model: `omega_lo` with probability `q`, else `omega_hi`.
    #[staticmethod]
    #[pyo3(signature = (omega_hi, omega_lo, q, seed = 0))]
    fn two_point(omega_hi: f64, omega_lo: f64, q: f64, seed: u64) -> PyResult<Self> {
        let inner = EnvironmentModel::make_iid_two_point(omega_hi, omega_lo, q, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (support, weights, seed = 0))]
    fn iid(support: Vec<f64>, weights: Vec<f64>, seed: u64) -> PyResult<Self> {
        let inner = EnvironmentModel::make_iid_discrete(support, weights, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (omega_states, transition, seed = 0))]
    fn markov(omega_states: Vec<f64>, transition: Vec<Vec<f64>>, seed: u64) -> PyResult<Self> {
        let inner = EnvironmentModel::make_markov_finite(omega_states, transition, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Constant environment; bypasses the zero-speed gate.
    #[staticmethod]
    #[pyo3(signature = (omega, seed = 0))]
    fn constant(omega: f64, seed: u64) -> PyResult<Self> {
        let inner = EnvironmentModel::constant(omega, seed).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Model from its JSON description.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let spec: ModelSpec = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: spec.build().map_err(to_py)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&ModelSpec::from(&self.inner)).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn mean_log_rho(&self) -> f64 {
        self.inner.mean_log_rho()
    }

    #[pyo3(name = "lambda_")]
    fn lambda_fn(&self, lam: f64) -> f64 {
        spectrum::lambda_fn(&self.inner, lam)
    }

    /// `(kappa, boundary)`.
    fn kappa_root(&self) -> PyResult<(f64, bool)> {
        let k = spectrum::kappa_root(&self.inner).map_err(to_py)?;
        Ok((k.kappa, k.boundary))
    }

    fn kappa_via_rate(&self) -> f64 {
        spectrum::kappa_via_rate(&self.inner).kappa
    }

    /// `J(x)`; `inf` outside the closed slope range.
    fn rate_function(&self, x: f64) -> f64 {
        spectrum::rate_function(&self.inner, x)
    }

    fn slope_range(&self) -> (f64, f64) {
        spectrum::slope_range(&self.inner)
    }

    fn realize(&self, seed: u64) -> PyRealization {
        PyRealization {
            inner: self.inner.realize_with_seed(seed),
        }
    }

    fn __repr__(&self) -> String {
        format!("Model({})", self.to_json().unwrap_or_default())
    }
}

/// One realization of the environment, indexed by site.
#[pyclass(name = "Realization", module = "rwre_py", frozen)]
struct PyRealization {
    inner: EnvironmentRealization,
}

#[pymethods]
impl PyRealization {
    /// `omega_i` for `lo <= i < hi`.
    fn omega(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.inner.omega_range(lo, hi)
    }

    fn rho(&self, lo: i64, hi: i64) -> Vec<f64> {
        self.inner.rho_range(lo, hi)
    }

    /// Position after `n` steps.
    fn run(&self, py: Python<'_>, n: u64, seed: u64) -> i64 {
        py.detach(|| walk::run_to_time_seeded(&self.inner, n, seed).position)
    }

    /// `(T_n or None if capped, {site: U_i^n})`.
    #[pyo3(signature = (target, seed, step_cap = u64::MAX))]
    fn hitting_time(&self, py: Python<'_>, target: i64, seed: u64, step_cap: u64) -> PyResult<(Option<u64>, BTreeMap<i64, u64>)> {
        if target < 1 {
            return Err(PyValueError::new_err("target must be positive"));
        }
        let rec = py.detach(|| walk::hitting_time_seeded(&self.inner, target, step_cap, seed));
        Ok((rec.hitting_time, rec.left_counts))
    }

    /// `(Z_0 .. Z_n, overflowed)`.
    fn simulate_z(&self, py: Python<'_>, n: usize, seed: u64) -> (Vec<u64>, bool) {
        let path = py.detach(|| branching::simulate_z_seeded(&self.inner, n, seed));
        (path.z, path.overflowed)
    }

    fn psi_exact(&self, n: usize, s: f64) -> f64 {
        branching::psi_exact(&self.inner, n, s)
    }
}

/// Nested product `phi_n(s)` over the given `rho` values.
#[pyfunction]
fn phi_product(rhos: Vec<f64>, s: f64) -> f64 {
    branching::phi_product_of(&rhos, s)
}

/// `log B_n(s)` by the ratio recursion.
#[pyfunction]
fn log_b(rhos: Vec<f64>, s: f64) -> PyResult<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(PyValueError::new_err("s must lie in [0, 1]"));
    }
    Ok(branching::log_b_of(&rhos, s))
}

/// `B_n(s)` by the recursive and the summed form.
#[pyfunction]
fn b_direct(rhos: Vec<f64>, n: usize, s: f64) -> PyResult<(f64, f64)> {
    let pair = branching::b_direct(&rhos, n, s).map_err(to_py)?;
    Ok((pair.recursion, pair.summed))
}

/// Run an experiment from its JSON config and return the result as JSON.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config = ExperimentConfig::from_json(config_json).map_err(to_py)?;
    let output = py.detach(|| harness::run(&config)).map_err(to_py)?;
    let text = match &output {
        harness::ExperimentOutput::Scaling(r) => serde_json::to_string(r),
        harness::ExperimentOutput::Spectrum(r) => serde_json::to_string(r),
        harness::ExperimentOutput::Audit(r) => serde_json::to_string(r),
    };
    text.map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn rwre_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyRealization>()?;
    m.add_function(wrap_pyfunction!(phi_product, m)?)?;
    m.add_function(wrap_pyfunction!(log_b, m)?)?;
    m.add_function(wrap_pyfunction!(b_direct, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
