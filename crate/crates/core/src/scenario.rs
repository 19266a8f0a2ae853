//! Scenario files: everything one episode needs besides the robot model.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::controller::ControllerConfig;
use crate::model::{default_model, line_col, load_model_file, ModelError, RobotModel};
use crate::planner::{GaitParams, PelvisOptions};
use crate::sim::{DeflectionMode, DeflectionModel, TerrainMap};

/// Environment variable naming a model file used when a scenario does not.
pub const MODEL_ENV: &str = "BIPED_MODEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Touchdown speed treated as a severe collision, m/s.
    pub fail_threshold: f64,
    /// Touchdown speed regarded as a soft landing, m/s.
    pub soft_target: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            fail_threshold: 0.05,
            soft_target: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub gait: GaitParams,
    #[serde(default)]
    pub pelvis: PelvisOptions,
    #[serde(default)]
    pub terrain: TerrainMap,
    #[serde(default)]
    pub deflection: DeflectionModel,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl ScenarioConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            model: None,
            gait: GaitParams::default(),
            pelvis: PelvisOptions::default(),
            terrain: TerrainMap::default(),
            deflection: DeflectionModel::default(),
            controller: ControllerConfig::default(),
            metrics: MetricsConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a scenario; a relative model path is resolved against the
    /// scenario's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let (Some(m), Some(dir)) = (cfg.model.as_mut(), path.parent()) {
            if m.is_relative() {
                *m = dir.join(&*m);
            }
        }
        Ok(cfg)
    }

    /// Sets the swing-foot tip error; zero switches deflection off, and a
    /// positive value switches it on in constant mode unless a mode is
    /// already configured.
    pub fn set_tip_error(&mut self, tip_error: f64) {
        if tip_error > 0.0 {
            if self.deflection.mode == DeflectionMode::Off {
                self.deflection.mode = DeflectionMode::Constant;
            }
            self.deflection.tip_error_max = tip_error;
        } else {
            self.deflection.mode = DeflectionMode::Off;
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.terrain.validate().map_err(ScenarioError::Invalid)?;
        self.deflection.validate().map_err(ScenarioError::Invalid)?;
        self.controller
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        let m = &self.metrics;
        if !(m.fail_threshold > 0.0 && m.soft_target > 0.0 && m.soft_target <= m.fail_threshold) {
            return Err(ScenarioError::Invalid(
                "metrics thresholds must satisfy 0 < soft_target <= fail_threshold".into(),
            ));
        }
        Ok(())
    }

    /// The scenario's model file, else the file named by [`MODEL_ENV`], else
    /// the built-in model.
    pub fn resolve_model(&self) -> Result<RobotModel, ScenarioError> {
        if let Some(p) = &self.model {
            return Ok(load_model_file(p)?);
        }
        match std::env::var_os(MODEL_ENV) {
            Some(p) if !p.is_empty() => Ok(load_model_file(PathBuf::from(p))?),
            _ => Ok(default_model()),
        }
    }
}
