//! Service configuration: the `[service]` table of a TOML file plus
//! environment overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const ENV_PORT: &str = "CAISE_PORT";
pub const ENV_CHECKPOINT: &str = "CAISE_CHECKPOINT";
pub const ENV_CORPUS: &str = "CAISE_CORPUS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Model checkpoint used for proposals.
    pub checkpoint: Option<PathBuf>,
    /// Scripted proposer file, used when no checkpoint is set.
    pub script: Option<PathBuf>,
    /// Corpus manifest; a synthetic corpus is generated when unset.
    pub corpus: Option<PathBuf>,
    pub synthetic_corpus_seed: u64,
    pub synthetic_corpus_size: usize,
    /// Detection feature length when no checkpoint fixes it.
    pub feature_dim: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            checkpoint: None,
            script: None,
            corpus: None,
            synthetic_corpus_seed: 1,
            synthetic_corpus_size: 300,
            feature_dim: 16,
        }
    }
}

impl ServiceConfig {
    /// Parses the `[service]` table of a TOML document; other tables are ignored.
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ServiceError::Config(e.to_string()))?;
        match table.remove("service") {
            None => Ok(ServiceConfig::default()),
            Some(v) => v.try_into().map_err(|e: toml::de::Error| ServiceError::Config(e.to_string())),
        }
    }

    /// Reads `path` (if any) and applies overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ServiceError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ServiceError::Config(format!("{}: {e}", p.display())))?;
                ServiceConfig::from_toml(&text)?
            }
            None => ServiceConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ServiceError> {
        if let Some(p) = get(ENV_PORT) {
            self.port = p.parse().map_err(|_| ServiceError::Config(format!("{ENV_PORT}={p} is not a port number")))?;
        }
        if let Some(p) = get(ENV_CHECKPOINT) {
            self.checkpoint = Some(p.into());
        }
        if let Some(p) = get(ENV_CORPUS) {
            self.corpus = Some(p.into());
        }
        Ok(())
    }
}
