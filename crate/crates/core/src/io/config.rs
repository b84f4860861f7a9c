//! TOML run configuration.

use crate::agent::TrainConfig;
use crate::env::EnvConfig;
use crate::eval::EvalConfig;
use crate::scene::{builtin_map, load_map, MapLayout, SpawnConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Built-in map ids or paths to map documents.
    pub maps: Vec<String>,
    /// Fixed obstacle density; absent runs the curriculum.
    pub lambda: Option<f64>,
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    /// Updates between periodic checkpoints.
    pub checkpoint_every: u64,
    pub spawn: SpawnConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            maps: ["a", "b", "c", "d", "e", "f", "g", "h"].map(String::from).to_vec(),
            lambda: None,
            out_dir: PathBuf::from("runs"),
            checkpoint: None,
            checkpoint_every: 100,
            spawn: SpawnConfig::default(),
            env: EnvConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunConfigError {
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunConfigError {
    fn field(path: impl Into<String>, message: impl ToString) -> Self {
        Self::Field { path: path.into(), message: message.to_string() }
    }

    /// Dotted path of the offending field, when known.
    pub fn path(&self) -> Option<&str> {
        match self {
            Self::Field { path, .. } => Some(path),
            Self::Io { .. } => None,
        }
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(src: &str) -> Result<Self, RunConfigError> {
        let de = toml::Deserializer::new(src);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            RunConfigError::field(if path == "." { "<document>".into() } else { path }, inner.message().trim())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| RunConfigError::Io { path: path.into(), source })?;
        Self::from_toml(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<(), RunConfigError> {
        if self.maps.is_empty() {
            return Err(RunConfigError::field("maps", "select at least one map"));
        }
        if let Some(l) = self.lambda {
            if !(0.0..=1.0).contains(&l) {
                return Err(RunConfigError::field("lambda", format!("{l} outside [0, 1]")));
            }
        }
        if self.checkpoint_every == 0 {
            return Err(RunConfigError::field("checkpoint_every", "must be at least 1"));
        }
        if let Some(c) = &self.checkpoint {
            if !c.is_file() {
                return Err(RunConfigError::field("checkpoint", format!("{} does not exist", c.display())));
            }
        }
        self.spawn.validate().map_err(|e| RunConfigError::field("spawn", e))?;
        validate_env(&self.env)?;
        self.train.validate().map_err(|e| RunConfigError::field(format!("train.{}", e.field), e.message))?;
        self.eval.validate().map_err(|e| RunConfigError::field("eval", e))?;
        for (i, m) in self.maps.iter().enumerate() {
            resolve_map(m).map_err(|e| RunConfigError::field(format!("maps[{i}]"), e))?;
        }
        Ok(())
    }

    pub fn resolve_maps(&self) -> Result<Vec<Arc<MapLayout>>, RunConfigError> {
        self.maps
            .iter()
            .enumerate()
            .map(|(i, m)| resolve_map(m).map(Arc::new).map_err(|e| RunConfigError::field(format!("maps[{i}]"), e)))
            .collect()
    }
}

fn validate_env(env: &EnvConfig) -> Result<(), RunConfigError> {
    let positive = |v: f64| v.is_finite() && v > 0.0;
    if env.substeps == 0 {
        return Err(RunConfigError::field("env.substeps", "must be at least 1"));
    }
    if env.max_steps == 0 {
        return Err(RunConfigError::field("env.max_steps", "must be at least 1"));
    }
    if !positive(env.goal_radius) {
        return Err(RunConfigError::field("env.goal_radius", "must be positive"));
    }
    if !env.noise.is_valid() {
        return Err(RunConfigError::field("env.noise", "standard deviations must be finite and non-negative"));
    }
    if !positive(env.physics.dt) {
        return Err(RunConfigError::field("env.physics.dt", "must be positive"));
    }
    let l = env.physics.limits;
    if !(l.v_min < l.v_max) || !positive(l.omega_max) {
        return Err(RunConfigError::field("env.physics.limits", "empty action range"));
    }
    Ok(())
}

/// A built-in map id, or a path to a map document.
pub fn resolve_map(name: &str) -> Result<MapLayout, String> {
    if let Ok(m) = builtin_map(name) {
        return Ok(m);
    }
    let src = std::fs::read_to_string(name).map_err(|e| format!("{name}: not a built-in map and not readable ({e})"))?;
    load_map(&src).map_err(|e| format!("{name}: {e}"))
}
