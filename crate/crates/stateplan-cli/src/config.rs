//! Run configuration: one TOML file describing the environment, the oracle,
//! the planner constants and where state lives. Unknown keys are rejected at
//! every level.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use stateplan::agent::EpisodeConfig;
use stateplan::graph::ValueConfig;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSpec,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub values: ValueConfig,
    #[serde(default)]
    pub episode: EpisodeConfig,
    pub paths: Paths,
    /// Seeds the exploration-objective draw; everything else is deterministic.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Toy,
    Bridge,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// TCP address of a bridged environment, e.g. "127.0.0.1:7011".
    #[serde(default)]
    pub address: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    pub kind: OracleKind,
    /// Response script for the mock oracle.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    /// Environment variable holding the API key; the value never lives in
    /// the config file.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub max_retries: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub graph: PathBuf,
    pub learnings: PathBuf,
    pub log_dir: PathBuf,
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths are resolved
    /// against the config file's directory, so a config behaves the same
    /// from any working directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&raw)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;

        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.graph = resolve(base, &cfg.paths.graph);
        cfg.paths.learnings = resolve(base, &cfg.paths.learnings);
        cfg.paths.log_dir = resolve(base, &cfg.paths.log_dir);
        if let Some(script) = cfg.oracle.script.take() {
            cfg.oracle.script = Some(resolve(base, &script));
        }
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.values
            .validate()
            .map_err(|e| CliError::Config(format!("[values] {e}")))?;
        self.episode
            .validate()
            .map_err(|e| CliError::Config(format!("[episode] {e}")))?;

        match self.env.kind {
            EnvKind::Toy => {
                if self.env.address.is_some() {
                    return Err(CliError::Config(
                        "[env] address is only valid with kind = \"bridge\"".to_string(),
                    ));
                }
            }
            EnvKind::Bridge => {
                if self.env.address.is_none() {
                    return Err(CliError::Config(
                        "[env] kind = \"bridge\" requires an address".to_string(),
                    ));
                }
            }
        }

        match self.oracle.kind {
            OracleKind::Mock => {
                if self.oracle.script.is_none() {
                    return Err(CliError::Config(
                        "[oracle] kind = \"mock\" requires a script path".to_string(),
                    ));
                }
                for (key, set) in [
                    ("endpoint", self.oracle.endpoint.is_some()),
                    ("model", self.oracle.model.is_some()),
                    ("api_key_env", self.oracle.api_key_env.is_some()),
                    ("temperature", self.oracle.temperature.is_some()),
                    ("timeout_secs", self.oracle.timeout_secs.is_some()),
                ] {
                    if set {
                        return Err(CliError::Config(format!(
                            "[oracle] {key} is only valid with kind = \"http\""
                        )));
                    }
                }
            }
            OracleKind::Http => {
                if self.oracle.endpoint.is_none() || self.oracle.model.is_none() {
                    return Err(CliError::Config(
                        "[oracle] kind = \"http\" requires endpoint and model".to_string(),
                    ));
                }
                if self.oracle.script.is_some() {
                    return Err(CliError::Config(
                        "[oracle] script is only valid with kind = \"mock\"".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
