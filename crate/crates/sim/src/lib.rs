//! Deterministic testbed for the records system: universities of private
//! chain nodes behind a gateway, hub nodes, the Ministry and the ordering
//! service, joined by a seeded simulated network with fault injection.
//! Scenarios drive it through the gateway and assert on the outcome.

pub mod config;
pub mod fault;
pub mod net;
pub mod run;
pub mod scenario;
pub mod testbed;

pub use config::NetworkConfig;
pub use fault::{FaultKind, FaultSpec};
pub use run::{run_scenario, RunReport, Runner};
pub use scenario::{parse as parse_scenario, Scenario};
pub use testbed::Testbed;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown target {0}")]
    UnknownTarget(String),
    #[error("{0}")]
    Io(String),
}

/// Scenario files shipped with the crate, by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("happy-path", include_str!("../scenarios/happy-path.scn")),
    ("tamper-and-audit", include_str!("../scenarios/tamper-and-audit.scn")),
    ("lag-and-audit", include_str!("../scenarios/lag-and-audit.scn")),
    ("crash-during-audit", include_str!("../scenarios/crash-during-audit.scn")),
    ("credit-transfer", include_str!("../scenarios/credit-transfer.scn")),
    ("permission-probe", include_str!("../scenarios/permission-probe.scn")),
    ("replay-100", include_str!("../scenarios/replay-100.scn")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| scenario::parse(text).expect("bundled scenarios parse"))
}
