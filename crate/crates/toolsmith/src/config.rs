//! Pipeline configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toolsmith_core::action::{ActionLimits, LoopMode, DEFAULT_HZ};
use toolsmith_core::mesh::DEFAULT_FIT_RATIO;
use toolsmith_core::slicer::PrinterProfile;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Mock,
    Remote,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub interpret: BackendMode,
    pub genmesh: BackendMode,
    pub act: BackendMode,
    pub interpret_url: Option<String>,
    pub genmesh_url: Option<String>,
    pub act_url: Option<String>,
    /// Object-to-tool table for the mock interpreter; built-in table if unset.
    pub tool_table: Option<PathBuf>,
    /// Recorded analyses served instead of the mock rules, keyed by scene id.
    pub interpret_replay: Option<PathBuf>,
    /// Leading mock genmesh attempts that return a broken mesh.
    pub mock_genmesh_failures: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub hz: f64,
    pub mode: LoopMode,
    /// Overrides the task default when set.
    pub max_steps: Option<usize>,
    pub limits: ActionLimits,
}

impl Default for ControlSection {
    fn default() -> Self {
        Self { hz: DEFAULT_HZ, mode: LoopMode::Realtime, max_steps: None, limits: ActionLimits::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub config_version: u32,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub fit_ratio: f64,
    pub max_genmesh_attempts: u32,
    pub timeout_s: f64,
    pub backends: BackendsConfig,
    pub printer: PrinterProfile<f64>,
    pub control: ControlSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            config_version: CONFIG_VERSION,
            seed: 0,
            output_dir: PathBuf::from("out"),
            fit_ratio: DEFAULT_FIT_RATIO,
            max_genmesh_attempts: 3,
            timeout_s: 30.0,
            backends: BackendsConfig::default(),
            printer: PrinterProfile::default(),
            control: ControlSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: "<config>".into(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        if let Some(dir) = path.parent() {
            let rebase = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            rebase(&mut cfg.output_dir);
            if let Some(p) = cfg.backends.tool_table.as_mut() {
                rebase(p);
            }
            if let Some(p) = cfg.backends.interpret_replay.as_mut() {
                rebase(p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.config_version != CONFIG_VERSION {
            return bad(format!("unsupported config_version {} (expected {CONFIG_VERSION})", self.config_version));
        }
        if self.max_genmesh_attempts < 1 {
            return bad("max_genmesh_attempts must be at least 1".into());
        }
        if !(self.fit_ratio > 0.0 && self.fit_ratio.is_finite()) {
            return bad(format!("fit_ratio must be positive, got {}", self.fit_ratio));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("timeout_s must be positive, got {}", self.timeout_s));
        }
        if !(self.control.hz > 0.0 && self.control.hz.is_finite()) {
            return bad(format!("control.hz must be positive, got {}", self.control.hz));
        }
        if self.control.max_steps == Some(0) {
            return bad("control.max_steps must be at least 1".into());
        }
        let b = &self.backends;
        for (stage, mode, url) in [
            ("interpret", b.interpret, &b.interpret_url),
            ("genmesh", b.genmesh, &b.genmesh_url),
            ("act", b.act, &b.act_url),
        ] {
            if mode == BackendMode::Remote && url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                return bad(format!("backends.{stage} is remote but backends.{stage}_url is not set"));
            }
        }
        self.printer.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!(c.max_genmesh_attempts, 3);
        assert_eq!(c.timeout_s, 30.0);
        assert_eq!(c.control.hz, 5.0);
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn remote_stage_needs_url() {
        let e = PipelineConfig::from_toml("[backends]\nact = \"remote\"\n").unwrap_err();
        assert!(e.to_string().contains("act_url"));
        PipelineConfig::from_toml("[backends]\nact = \"remote\"\nact_url = \"http://127.0.0.1:9\"\n").unwrap();
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        assert!(PipelineConfig::from_toml("max_genmesh_attempts = 0").is_err());
        assert!(PipelineConfig::from_toml("config_version = 2").is_err());
        assert!(PipelineConfig::from_toml("colour = 1").is_err());
        assert!(PipelineConfig::from_toml("[printer]\nlayer_height_mm = 1.0").is_err());
    }
}
