//! Runtime settings shared by the command-line tools.
//!
//! Resolution order: explicit overrides, then the data-dir environment
//! variable (for `data_dir` only), then the config file, then defaults. An
//! unset `debounce_s` is derived from the resolved perimeter.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face_gallery::{DEFAULT_DIMENSION, DEFAULT_MATCH_THRESHOLD};
use crate::park_simulator::{ReplayOptions, DEFAULT_PERIMETER_M};
use crate::session_tracker::{default_debounce_s, TrackerConfig, DEFAULT_SESSION_TIMEOUT_S};

pub const DATA_DIR_ENV: &str = "PARKTRACK_DATA_DIR";
pub const DEFAULT_DATA_DIR: &str = "parktrack-data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub perimeter_m: f64,
    pub debounce_s: f64,
    pub match_threshold: f64,
    pub embedding_dim: usize,
    pub session_timeout_s: f64,
    pub data_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            perimeter_m: DEFAULT_PERIMETER_M,
            debounce_s: default_debounce_s(DEFAULT_PERIMETER_M),
            match_threshold: DEFAULT_MATCH_THRESHOLD,
            embedding_dim: DEFAULT_DIMENSION,
            session_timeout_s: DEFAULT_SESSION_TIMEOUT_S,
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
        }
    }
}

/// A partially specified [`Config`], as read from a file or the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigOverrides {
    pub perimeter_m: Option<f64>,
    pub debounce_s: Option<f64>,
    pub match_threshold: Option<f64>,
    pub embedding_dim: Option<usize>,
    pub session_timeout_s: Option<f64>,
    pub data_dir: Option<PathBuf>,
}

impl ConfigOverrides {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::field(e.path().to_string(), e.inner().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Fields set in `self` win over those in `lower`.
    pub fn over(self, lower: ConfigOverrides) -> ConfigOverrides {
        ConfigOverrides {
            perimeter_m: self.perimeter_m.or(lower.perimeter_m),
            debounce_s: self.debounce_s.or(lower.debounce_s),
            match_threshold: self.match_threshold.or(lower.match_threshold),
            embedding_dim: self.embedding_dim.or(lower.embedding_dim),
            session_timeout_s: self.session_timeout_s.or(lower.session_timeout_s),
            data_dir: self.data_dir.or(lower.data_dir),
        }
    }
}

impl Config {
    pub fn resolve(flags: ConfigOverrides, env_data_dir: Option<PathBuf>, file: Option<ConfigOverrides>) -> Result<Self> {
        let env = ConfigOverrides {
            data_dir: env_data_dir,
            ..Default::default()
        };
        let merged = flags.over(env).over(file.unwrap_or_default());
        let defaults = Config::default();
        let perimeter_m = merged.perimeter_m.unwrap_or(defaults.perimeter_m);
        let config = Config {
            perimeter_m,
            debounce_s: merged.debounce_s.unwrap_or_else(|| default_debounce_s(perimeter_m)),
            match_threshold: merged.match_threshold.unwrap_or(defaults.match_threshold),
            embedding_dim: merged.embedding_dim.unwrap_or(defaults.embedding_dim),
            session_timeout_s: merged.session_timeout_s.unwrap_or(defaults.session_timeout_s),
            data_dir: merged.data_dir.unwrap_or(defaults.data_dir),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("perimeter_m", self.perimeter_m),
            ("debounce_s", self.debounce_s),
            ("session_timeout_s", self.session_timeout_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::field(name, format!("must be > 0, got {v}")));
            }
        }
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return Err(Error::field("match_threshold", "must be in (0, 1]"));
        }
        if self.embedding_dim == 0 {
            return Err(Error::field("embedding_dim", "must be > 0"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let c: Config =
            serde_path_to_error::deserialize(de).map_err(|e| Error::field(e.path().to_string(), e.inner().to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn tracker(&self) -> TrackerConfig {
        TrackerConfig {
            perimeter_m: self.perimeter_m,
            debounce_s: self.debounce_s,
            session_timeout_s: self.session_timeout_s,
        }
    }

    pub fn replay_options(&self) -> ReplayOptions {
        ReplayOptions {
            tracker: self.tracker(),
            match_threshold: self.match_threshold,
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }
}
