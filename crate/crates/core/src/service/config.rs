use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::netsim::GENESIS_TIME;
use crate::types::Role;

use super::ServiceError;

/// Environment variable that overrides `data_dir`.
pub const DATA_DIR_ENV: &str = "DHP_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Hsa,
    Bm,
}

impl NodeRole {
    pub fn role(self) -> Role {
        match self {
            NodeRole::Hsa => Role::Hsa,
            NodeRole::Bm => Role::Bm,
        }
    }
}

fn default_genesis_time() -> u64 {
    GENESIS_TIME.0
}

fn default_block_interval_ms() -> u64 {
    1000
}

/// Node daemon configuration, read from TOML.
///
/// ```toml
/// role = "hsa"
/// listen_address = "127.0.0.1:7401"
/// peer_addresses = ["127.0.0.1:7402"]
/// data_dir = "data/hsa-1"
/// registry_file = "registry.txt"
/// key_file = "keys/hsa-1.key"
/// ```
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub role: NodeRole,
    pub listen_address: String,
    #[serde(default)]
    pub peer_addresses: Vec<String>,
    pub data_dir: PathBuf,
    pub registry_file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy_file: Option<PathBuf>,
    pub key_file: PathBuf,
    /// Shared by every member of the consortium; fixes the genesis block.
    #[serde(default = "default_genesis_time")]
    pub genesis_time: u64,
    #[serde(default = "default_block_interval_ms")]
    pub block_interval_ms: u64,
}

impl NodeConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Reads `path`, resolves relative paths and applies `DHP_DATA_DIR`.
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_relative_to(path.parent().unwrap_or(Path::new(".")));
        cfg.apply_data_dir_override(std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        Ok(cfg)
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data_dir);
        fix(&mut self.registry_file);
        fix(&mut self.key_file);
        if let Some(p) = &mut self.policy_file {
            fix(p);
        }
    }

    pub fn apply_data_dir_override(&mut self, data_dir: Option<PathBuf>) {
        if let Some(dir) = data_dir.filter(|d| !d.as_os_str().is_empty()) {
            self.data_dir = dir;
        }
    }

    pub fn block_log_path(&self) -> PathBuf {
        self.data_dir.join("blocks.log")
    }

    pub fn receipt_log_path(&self) -> PathBuf {
        self.data_dir.join("receipts.log")
    }
}
