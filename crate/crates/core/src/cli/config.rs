use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::CalibrationOptions;
use crate::diffusion::{LipschitzProbeConfig, QuadratureOptions, SdeRunConfig, Theorem41Config};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeSection {
    pub horizon: f64,
    pub steps: usize,
    pub paths: usize,
    pub max_work: u64,
    pub confidence_z: f64,
}

impl Default for SdeSection {
    fn default() -> Self {
        let d = SdeRunConfig::default();
        Self {
            horizon: d.horizon,
            steps: d.steps,
            paths: d.paths,
            max_work: d.max_work,
            confidence_z: d.confidence_z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub bin_width: f64,
    pub min_bin_count: usize,
    pub sweep_step: f64,
    pub ball_radius: f64,
    pub tolerate_mean_gap: f64,
}

impl Default for AuditSection {
    fn default() -> Self {
        let c = CalibrationOptions::default();
        Self {
            bin_width: c.bin_width,
            min_bin_count: c.min_bin_count,
            sweep_step: 0.1,
            ball_radius: 0.0,
            tolerate_mean_gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TweedieSection {
    pub sigma: f64,
    pub trials: usize,
    pub tolerance: f64,
}

impl Default for TweedieSection {
    fn default() -> Self {
        Self {
            sigma: 0.8,
            trials: 50,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub epsilon: f64,
    pub thresholds: Vec<f64>,
    pub pairs: usize,
    pub lipschitz_probes: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            thresholds: vec![0.5],
            pairs: 20,
            lipschitz_probes: LipschitzProbeConfig::default().probes,
        }
    }
}

/// Every tunable default in one place; `fairdiff report --write-default-config` emits it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub sde: SdeSection,
    pub quadrature: QuadratureOptions,
    pub audit: AuditSection,
    pub simulate: SimulateSection,
    pub tweedie: TweedieSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::InvalidArgument(format!("config {}: {e}", path.display()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn sde_run(&self) -> SdeRunConfig {
        SdeRunConfig {
            horizon: self.sde.horizon,
            steps: self.sde.steps,
            paths: self.sde.paths,
            seed: self.seed,
            max_work: self.sde.max_work,
            confidence_z: self.sde.confidence_z,
        }
    }

    pub fn calibration(&self) -> CalibrationOptions {
        CalibrationOptions {
            bin_width: self.audit.bin_width,
            min_bin_count: self.audit.min_bin_count,
        }
    }

    pub fn probes(&self) -> LipschitzProbeConfig {
        LipschitzProbeConfig {
            probes: self.simulate.lipschitz_probes,
            horizon: self.sde.horizon,
            seed: self.seed,
        }
    }

    pub fn theorem41(&self) -> Theorem41Config {
        Theorem41Config {
            horizon: self.sde.horizon,
            quadrature: self.quadrature.clone(),
            probes: self.probes(),
        }
    }
}
