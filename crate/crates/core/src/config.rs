//! TOML configuration: zone layout, risk parameters, sensor mounting and
//! join staleness. Every section and field is optional; missing values take
//! their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{LayoutError, SensorExtrinsics, ZoneLayout};
use crate::ldm::Millis;
use crate::risk::{RiskError, RiskParameters};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config syntax: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("sensor extrinsics must be finite with positive height")]
    Extrinsics,
}

/// Maximum record age, in ms, usable when joining streams at a tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Staleness {
    pub gaze_ms: Millis,
    pub detection_ms: Millis,
}

impl Default for Staleness {
    fn default() -> Self {
        // tolerates a 2 Hz gaze stream and a 10 Hz LiDAR with jitter
        Self { gaze_ms: 500, detection_ms: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub layout: ZoneLayout,
    pub risk: RiskParameters,
    pub sensor: SensorExtrinsics,
    pub staleness: Staleness,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.layout.validate()?;
        self.risk.validate()?;
        if !self.sensor.is_valid() {
            return Err(ConfigError::Extrinsics);
        }
        Ok(())
    }
}
