//! The single JSON configuration document shared by every entry point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::EnergyParams;
use crate::netpredict::PredictorParams;
use crate::preference::KeywordParams;
use crate::scheduler::SchedulerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("config out of range: {0}")]
    Range(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub energy: EnergyParams,
    pub scheduler: SchedulerConfig,
    pub preference: KeywordParams,
    pub predictor: PredictorParams,
    pub seed: u64,
}

impl Config {
    /// Parses and range-checks a config document. Missing sections and
    /// fields take their defaults; unknown fields are rejected.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.energy.validate().map_err(ConfigError::Range)?;
        self.scheduler.validate().map_err(ConfigError::Range)?;
        self.preference.validate().map_err(ConfigError::Range)?;
        self.predictor.validate().map_err(ConfigError::Range)?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
