//! Engine configuration file.

use std::path::Path;

use roomcast_core::attention::{AttentionPolicy, PolicyError};
use roomcast_core::sports::SportsConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid attention policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    pub width: i64,
    pub height: i64,
    pub grid_step: i64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            width: 1600,
            height: 900,
            grid_step: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub attention: AttentionPolicy,
    pub sports: SportsConfig,
    pub table: TableConfig,
    /// Virtual milliseconds per hub tick.
    pub tick_ms: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            attention: AttentionPolicy::default(),
            sports: SportsConfig::default(),
            table: TableConfig::default(),
            tick_ms: 100,
        }
    }
}

impl EngineConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail too
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.attention.validate()?;
        let s = &self.sports;
        if !(s.field.length_m > 0.0 && s.field.width_m > 0.0) {
            return Err(ConfigError::Invalid("field dimensions must be positive".into()));
        }
        if !(s.d_max_m > 0.0) {
            return Err(ConfigError::Invalid("d_max_m must be positive".into()));
        }
        if s.heatmap_rows == 0 || s.heatmap_cols == 0 {
            return Err(ConfigError::Invalid("heatmap grid must be at least 1x1".into()));
        }
        if s.cue_window_ms == 0 {
            return Err(ConfigError::Invalid("cue_window_ms must be positive".into()));
        }
        let t = &self.table;
        if t.width <= 0 || t.height <= 0 || t.grid_step <= 0 {
            return Err(ConfigError::Invalid("table size and grid_step must be positive".into()));
        }
        if self.tick_ms == 0 {
            return Err(ConfigError::Invalid("tick_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: EngineConfig = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}
