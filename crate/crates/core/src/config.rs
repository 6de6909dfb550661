//! One document holding every tunable. Absent fields keep their defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::applications::{FallConfig, HeatmapConfig};
use crate::error::{Error, Result};
use crate::gbrt::GbrtParams;
use crate::pipeline::PipelineConfig;
use crate::ranging::FeatureConfig;

/// Environment variable naming a config file to use when none is given explicitly.
pub const CONFIG_ENV: &str = "THERMAL_RANGING_CONFIG";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub gbrt: GbrtParams,
    pub features: FeatureConfig,
    pub fall: FallConfig,
    pub heatmap: HeatmapConfig,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        self.gbrt.validate()
    }
}
