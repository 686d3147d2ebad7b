use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::engine::EngineOptions;

/// `serve` configuration, read from TOML:
///
/// ```toml
/// address = "127.0.0.1:9200"
/// storage_dir = "data"
/// index_snapshot = "data/indices.json"
/// ```
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub address: String,
    pub storage_dir: PathBuf,
    #[serde(default)]
    pub index_snapshot: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::parse(&text)?;
        // Relative paths are taken from the config file's directory.
        if let Some(base) = path.parent() {
            config.storage_dir = base.join(&config.storage_dir);
            config.index_snapshot = config.index_snapshot.map(|p| base.join(p));
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        config.socket_addr()?;
        Ok(config)
    }

    pub fn socket_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.address
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("address `{}`: {e}", self.address)))
    }

    pub fn engine_options(&self) -> EngineOptions {
        EngineOptions {
            storage_dir: Some(self.storage_dir.clone()),
            index_snapshot: self.index_snapshot.clone(),
        }
    }
}
