//! Operator configuration.
//!
//! The file is a flat TOML table of `key = value` lines; `#` starts a
//! comment and strings are quoted. Recognised keys:
//!
//! ```toml
//! security = 192              # 128, 192 or 256
//! beta = 3000                 # biometric threshold
//! tps_address = "127.0.0.1:7401"
//! cs_address = "127.0.0.1:7402"
//! store_path = "tps-store"    # third-party server's ciphertext directory
//! key_dir = "keys"
//! backup_path = "cs-backup"   # optional; central server keeps copies
//! ```
//!
//! The path comes from `--config` or `PPID_CONFIG`. Command-line flags win
//! over the file, and the file wins over the defaults shown above (no
//! backup by default).

use std::path::{Path, PathBuf};

use ppid_core::encoding::DEFAULT_BETA;
use ppid_core::he::SecurityLevel;
use ppid_core::queries::QueryConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub security: Option<u16>,
    pub beta: Option<u64>,
    pub tps_address: Option<String>,
    pub cs_address: Option<String>,
    pub store_path: Option<PathBuf>,
    pub key_dir: Option<PathBuf>,
    pub backup_path: Option<PathBuf>,
}

impl FileConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: FileConfig) -> Self {
        Self {
            security: other.security.or(self.security),
            beta: other.beta.or(self.beta),
            tps_address: other.tps_address.or(self.tps_address),
            cs_address: other.cs_address.or(self.cs_address),
            store_path: other.store_path.or(self.store_path),
            key_dir: other.key_dir.or(self.key_dir),
            backup_path: other.backup_path.or(self.backup_path),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Config {
    pub security: SecurityLevel,
    pub query: QueryConfig,
    pub tps_address: String,
    pub cs_address: String,
    pub store_path: PathBuf,
    pub key_dir: PathBuf,
    pub backup_path: Option<PathBuf>,
}

impl Config {
    pub fn resolve(file: FileConfig) -> Result<Self, ConfigError> {
        let security = SecurityLevel::try_from(file.security.unwrap_or(192))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let query = QueryConfig::new(file.beta.unwrap_or(DEFAULT_BETA))
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Self {
            security,
            query,
            tps_address: file.tps_address.unwrap_or_else(|| "127.0.0.1:7401".into()),
            cs_address: file.cs_address.unwrap_or_else(|| "127.0.0.1:7402".into()),
            store_path: file.store_path.unwrap_or_else(|| "tps-store".into()),
            key_dir: file.key_dir.unwrap_or_else(|| "keys".into()),
            backup_path: file.backup_path,
        })
    }
}
