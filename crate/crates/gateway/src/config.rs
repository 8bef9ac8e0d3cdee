//! Gateway configuration: one TOML file plus environment overrides.
//!
//! Overrides: `EDUCHAIN_LISTEN` (address), `EDUCHAIN_PORT` (port only),
//! `EDUCHAIN_FALLBACK` (node id) and `EDUCHAIN_ROUTE_<DEPT>` (node id for
//! department `<dept>`, lower-cased).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::api::{GatewaySettings, DEFAULT_SESSION_TTL};
use crate::auth::DEFAULT_LOCKOUT_THRESHOLD;
use crate::route::RouteTable;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid override {key}: {reason}")]
    Override { key: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub session_ttl: u64,
    pub lockout_threshold: u32,
    pub fallback: String,
    pub routes: BTreeMap<String, String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: "127.0.0.1:8080".into(),
            session_ttl: DEFAULT_SESSION_TTL,
            lockout_threshold: DEFAULT_LOCKOUT_THRESHOLD,
            fallback: "n0".into(),
            routes: BTreeMap::new(),
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads `path` and applies the process environment.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        cfg.apply_overrides(std::env::vars())?;
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            match key.as_str() {
                "EDUCHAIN_LISTEN" => self.listen = value,
                "EDUCHAIN_PORT" => {
                    let port: u16 = value.parse().map_err(|_| ConfigError::Override {
                        key: key.clone(),
                        reason: format!("`{value}` is not a port"),
                    })?;
                    let host = self.listen.rsplit_once(':').map_or("127.0.0.1", |(h, _)| h);
                    self.listen = format!("{host}:{port}");
                }
                "EDUCHAIN_FALLBACK" => self.fallback = value,
                _ => {
                    if let Some(dept) = key.strip_prefix("EDUCHAIN_ROUTE_") {
                        self.routes.insert(dept.to_lowercase(), value);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn route_table(&self) -> RouteTable {
        RouteTable {
            routes: self.routes.clone(),
            fallback: self.fallback.clone(),
        }
    }

    pub fn settings(&self) -> GatewaySettings {
        GatewaySettings {
            session_ttl: self.session_ttl,
            lockout_threshold: self.lockout_threshold,
        }
    }
}
