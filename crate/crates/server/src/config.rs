//! Server configuration: a TOML file with environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use psytest_core::StoreConfig;
use serde::{Deserialize, Serialize};

pub const ENV_ADDR: &str = "PSYTEST_ADDR";
pub const ENV_ADMIN_ADDR: &str = "PSYTEST_ADMIN_ADDR";
pub const ENV_DATA_DIR: &str = "PSYTEST_DATA_DIR";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{var}={value:?} is not a socket address")]
    BadAddr { var: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// Public API listener.
    pub listen_addr: SocketAddr,
    /// Administrative listener; keep it on loopback or a private interface.
    pub admin_addr: SocketAddr,
    pub data_dir: PathBuf,
    /// Bearer tokens (see [`crate::auth`]). Without one, every researcher
    /// request is rejected.
    pub token_file: Option<PathBuf>,
    pub shard_count: u32,
    pub slaves_per_shard: u32,
    pub snapshot_every: u64,
    pub fsync: bool,
    pub replication_interval_ms: u64,
}

impl Default for ServerConfig {
    fn default() -> Self {
        let store = StoreConfig::default();
        Self {
            listen_addr: ([0, 0, 0, 0], 8080).into(),
            admin_addr: ([127, 0, 0, 1], 8081).into(),
            data_dir: PathBuf::from("data"),
            token_file: None,
            shard_count: store.shard_count,
            slaves_per_shard: store.slaves_per_shard,
            snapshot_every: store.snapshot_every,
            fsync: store.fsync,
            replication_interval_ms: 250,
        }
    }
}

impl ServerConfig {
    /// Reads `path` (defaults when `None`), then applies environment
    /// overrides. Relative paths in the file resolve against its directory.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                let mut cfg: ServerConfig =
                    toml::from_str(&text).map_err(|source| ConfigError::Parse {
                        path: p.to_path_buf(),
                        source,
                    })?;
                let base = p.parent().unwrap_or(Path::new("."));
                cfg.data_dir = base.join(&cfg.data_dir);
                cfg.token_file = cfg.token_file.map(|t| base.join(t));
                cfg
            }
            None => ServerConfig::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply_env(
        &mut self,
        get: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        let addr = |var: &'static str| -> Result<Option<SocketAddr>, ConfigError> {
            get(var)
                .map(|v| v.parse().map_err(|_| ConfigError::BadAddr { var, value: v }))
                .transpose()
        };
        if let Some(a) = addr(ENV_ADDR)? {
            self.listen_addr = a;
        }
        if let Some(a) = addr(ENV_ADMIN_ADDR)? {
            self.admin_addr = a;
        }
        if let Some(d) = get(ENV_DATA_DIR) {
            self.data_dir = PathBuf::from(d);
        }
        Ok(())
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.shard_count == 0 {
            return Err(ConfigError::Invalid("shard_count must be at least 1".into()));
        }
        if self.snapshot_every == 0 {
            return Err(ConfigError::Invalid("snapshot_every must be at least 1".into()));
        }
        if self.replication_interval_ms == 0 {
            return Err(ConfigError::Invalid(
                "replication_interval_ms must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn store_config(&self) -> StoreConfig {
        StoreConfig {
            shard_count: self.shard_count,
            slaves_per_shard: self.slaves_per_shard,
            snapshot_every: self.snapshot_every,
            fsync: self.fsync,
        }
    }
}
