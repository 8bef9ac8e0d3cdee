//! Testbed configuration, read from TOML.

use std::path::Path;

use educhain_core::block::DEFAULT_DIFFICULTY;
use serde::{Deserialize, Serialize};

use crate::SimError;

/// Shape and timing of a simulated deployment. Times are in logical ticks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub universities: usize,
    pub nodes_per_university: usize,
    /// Per-message delay is drawn uniformly from `latency_min..=latency_max`.
    pub latency_min: u64,
    pub latency_max: u64,
    /// Probability that any single message is lost.
    pub loss_rate: f64,
    pub seed: u64,
    /// Milliseconds of node clock per tick.
    pub clock_step_ms: u64,
    /// A miner is drawn every this many ticks in each university.
    pub block_interval: u64,
    pub max_peers: usize,
    pub chunk_size: usize,
    pub difficulty: u64,
    /// Address `educhain node serve` binds.
    pub listen: String,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            universities: 1,
            nodes_per_university: 5,
            latency_min: 1,
            latency_max: 5,
            loss_rate: 0.0,
            seed: 0,
            clock_step_ms: 100,
            block_interval: 10,
            max_peers: 7,
            chunk_size: 64,
            difficulty: DEFAULT_DIFFICULTY,
            listen: "127.0.0.1:8080".into(),
        }
    }
}

impl NetworkConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: NetworkConfig = toml::from_str(text).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies one `key=value` override, as written on a scenario `config` line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SimError> {
        let bad = || SimError::ConfigInvalid(format!("bad value for {key}: {value}"));
        let int = || value.parse::<u64>().map_err(|_| bad());
        match key {
            "universities" => self.universities = int()? as usize,
            "nodes_per_university" | "nodes" => self.nodes_per_university = int()? as usize,
            "latency_min" => self.latency_min = int()?,
            "latency_max" => self.latency_max = int()?,
            "loss_rate" => self.loss_rate = value.parse().map_err(|_| bad())?,
            "seed" => self.seed = int()?,
            "clock_step_ms" => self.clock_step_ms = int()?,
            "block_interval" => self.block_interval = int()?,
            "max_peers" => self.max_peers = int()? as usize,
            "chunk_size" => self.chunk_size = int()? as usize,
            "difficulty" => self.difficulty = int()?,
            _ => return Err(SimError::ConfigInvalid(format!("unknown config key {key}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::ConfigInvalid(m.to_owned()));
        if self.universities == 0 || self.universities > 9 {
            return fail("universities must be 1..=9");
        }
        if self.nodes_per_university == 0 {
            return fail("a university needs at least one node");
        }
        if self.latency_min == 0 || self.latency_min > self.latency_max {
            return fail("latency must satisfy 1 <= latency_min <= latency_max");
        }
        if !(0.0..1.0).contains(&self.loss_rate) {
            return fail("loss_rate must be in [0, 1)");
        }
        if self.block_interval == 0 || self.clock_step_ms == 0 {
            return fail("block_interval and clock_step_ms must be positive");
        }
        if self.max_peers < 2 {
            return fail("max_peers must be at least 2");
        }
        if self.chunk_size == 0 || self.difficulty == 0 {
            return fail("chunk_size and difficulty must be positive");
        }
        Ok(())
    }

    /// One line summarising the parameters that shape a run.
    pub fn summary(&self) -> String {
        format!(
            "universities={} nodes={} latency={}..{} loss={} step_ms={} interval={} max_peers={} chunk={} difficulty={}",
            self.universities,
            self.nodes_per_university,
            self.latency_min,
            self.latency_max,
            self.loss_rate,
            self.clock_step_ms,
            self.block_interval,
            self.max_peers,
            self.chunk_size,
            self.difficulty
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_one_five_node_university() {
        let cfg = NetworkConfig::from_toml("").unwrap();
        assert_eq!((cfg.universities, cfg.nodes_per_university, cfg.max_peers), (1, 5, 7));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_ranges() {
        assert!(NetworkConfig::from_toml("colour = 1").is_err());
        assert!(NetworkConfig::from_toml("latency_min = 0").is_err());
        assert!(NetworkConfig::from_toml("loss_rate = 1.0").is_err());
        let mut cfg = NetworkConfig::default();
        assert!(cfg.set("universities", "2").is_ok());
        assert_eq!(cfg.universities, 2);
        assert!(cfg.set("nope", "1").is_err());
    }
}
