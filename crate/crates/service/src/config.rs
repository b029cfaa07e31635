use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use termset_core::TrainConfig;

use crate::error::{Result, ServiceError};

/// Environment variable that overrides the data root.
pub const DATA_ENV: &str = "TERMSET_DATA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub port: u16,
    pub host: String,
    pub data_root: PathBuf,
    /// Largest accepted request body, in bytes.
    pub max_body_bytes: usize,
    /// Defaults for train requests that carry no `train_config`.
    pub train: TrainConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            port: 8080,
            host: "127.0.0.1".into(),
            data_root: PathBuf::from("termset-data"),
            max_body_bytes: 256 << 20,
            train: TrainConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ServiceError::BadRequest {
            message: format!("invalid config: {}", e.message()),
            field: None,
        })
    }

    /// Reads `path` when given, otherwise starts from defaults; then applies
    /// the data root environment override.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ServiceError::bad_request(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => ServiceConfig::default(),
        };
        if let Some(root) = std::env::var_os(DATA_ENV).filter(|v| !v.is_empty()) {
            config.data_root = PathBuf::from(root);
        }
        config.train.validate()?;
        Ok(config)
    }
}
