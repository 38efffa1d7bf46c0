//! Run configuration: a TOML file with `[dynamics]` and `[integrator]`
//! sections plus top-level `seed` and `out`, overlaid by command-line
//! overrides. Precedence: override, then file, then built-in default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynParams;
use crate::integrate::{IntegratorConfig, Method};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; when present it is the integrator's `rng_seed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub dynamics: DynParams,
    pub integrator: IntegratorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out: PathBuf::from("out"),
            dynamics: DynParams::default(),
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub method: Option<Method>,
    pub max_steps: Option<u64>,
    pub noise: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        Ok(cfg.resolved())
    }

    /// Applies overrides and validates the effective values.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        if let Some(seed) = o.seed {
            self.seed = Some(seed);
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(method) = o.method {
            self.integrator.method = method;
        }
        if let Some(max_steps) = o.max_steps {
            self.integrator.max_steps = max_steps;
        }
        if let Some(noise) = o.noise {
            self.integrator.noise_amp = noise;
        }
        let cfg = self.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Folds the global seed into the integrator and makes it explicit.
    fn resolved(mut self) -> Self {
        match self.seed {
            Some(seed) => self.integrator.rng_seed = seed,
            None => self.seed = Some(self.integrator.rng_seed),
        }
        self
    }

    pub fn seed(&self) -> u64 {
        self.integrator.rng_seed
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.dynamics
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.integrator
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Effective configuration as TOML; reading it back gives the same value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
