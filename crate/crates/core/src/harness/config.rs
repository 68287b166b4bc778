use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{EnvironmentModel, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    WalkExponent,
    HittingExponent,
    ZsumExponent,
    Spectrum,
    GenfnAudit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::WalkExponent => "walk_exponent",
            ExperimentKind::HittingExponent => "hitting_exponent",
            ExperimentKind::ZsumExponent => "zsum_exponent",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::GenfnAudit => "genfn_audit",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            ExperimentKind::WalkExponent => 1,
            ExperimentKind::HittingExponent => 2,
            ExperimentKind::ZsumExponent => 3,
            ExperimentKind::Spectrum => 4,
            ExperimentKind::GenfnAudit => 5,
        }
    }

    pub fn is_scaling(self) -> bool {
        matches!(
            self,
            ExperimentKind::WalkExponent | ExperimentKind::HittingExponent | ExperimentKind::ZsumExponent
        )
    }
}

fn default_replicas() -> usize {
    1
}

/// One experiment, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelSpec,
    /// Step counts, targets, or generation counts; strictly increasing.
    #[serde(default)]
    pub sizes: Vec<u64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    /// Hitting runs stop after `step_cap_factor * n^(1/kappa)` steps
    /// (default `1000`, i.e. `10 * n^(1/kappa) * 100`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cap_factor: Option<f64>,
    /// Series depth for the speed estimate of a spectrum run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_depth: Option<usize>,
    /// Randomized instances for the generating-function audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_cases: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("sizes must be strictly increasing".into()));
        }
        if self.experiment.is_scaling() {
            if self.sizes.is_empty() {
                return Err(Error::Config("scaling experiments need at least one size".into()));
            }
            if self.sizes[0] < 2 {
                return Err(Error::Config("sizes must be at least 2 (log n > 0)".into()));
            }
        }
        if let Some(f) = self.step_cap_factor {
            if !(f >= 1.0) {
                return Err(Error::Config("step_cap_factor must be at least 1".into()));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<EnvironmentModel> {
        self.model.build()
    }

    /// Caller-supplied id, or one derived from the model parameters.
    pub fn model_id(&self) -> String {
        if let Some(id) = &self.model_id {
            return id.clone();
        }
        let mut parts: Vec<u64> = self.model.omega_states.iter().map(|w| w.to_bits()).collect();
        if let Some(w) = &self.model.weights {
            parts.extend(w.iter().map(|x| x.to_bits()));
        }
        if let Some(t) = &self.model.transition {
            parts.extend(t.iter().flatten().map(|x| x.to_bits()));
        }
        let kind = serde_json::to_value(self.model.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        format!("{kind}-{:08x}", derive_seed(self.model.seed, &parts) >> 32)
    }

    /// Seed for one replica; a pure function of the config seed, the model seed,
    /// the experiment, the size and the replica index.
    pub fn replica_seed(&self, size: u64, replica: u64) -> u64 {
        derive_seed(self.seed, &[self.model.seed, self.experiment.tag(), size, replica])
    }
}
