//! Fault kinds the testbed can inject.

use std::fmt;

use educhain_core::store::schema::{RowKey, Table};

/// A fault and the tick it takes effect.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub scheduled_at: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FaultKind {
    /// Writes one field straight into a node's database, bypassing the chain.
    /// Field `*` with an empty value deletes the row.
    TamperRow {
        node: String,
        table: Table,
        row_key: RowKey,
        field: String,
        new_value: String,
    },
    /// Loses `fraction` of the messages to or from `node` for `window` ticks.
    DropMessages { node: String, fraction: f64, window: u64 },
    /// Takes `node` offline for `window` ticks: no messages, no votes, no routing.
    CrashNode { node: String, window: u64 },
    /// `node` ignores blocks until `blocks` more have been mined elsewhere.
    LagNode { node: String, blocks: u64 },
}

impl FaultKind {
    pub fn node(&self) -> &str {
        match self {
            FaultKind::TamperRow { node, .. }
            | FaultKind::DropMessages { node, .. }
            | FaultKind::CrashNode { node, .. }
            | FaultKind::LagNode { node, .. } => node,
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::TamperRow {
                node,
                table,
                row_key,
                field,
                new_value,
            } => write!(f, "tamper {node} {} {row_key} {field}={new_value:?}", table.name()),
            FaultKind::DropMessages { node, fraction, window } => {
                write!(f, "drop {node} fraction={fraction} window={window}")
            }
            FaultKind::CrashNode { node, window } => write!(f, "crash {node} window={window}"),
            FaultKind::LagNode { node, blocks } => write!(f, "lag {node} blocks={blocks}"),
        }
    }
}

/// Scenario syntax for every fault kind, as printed by `educhain sim faults --list`.
pub const FAULT_CATALOGUE: &[(&str, &str)] = &[
    (
        "tamper",
        "fault kind=tamper node=<id> table=<table> key=<a|b|c> field=<name|*> value=<text>  direct database write; field=* value=\"\" deletes the row",
    ),
    (
        "drop",
        "fault kind=drop node=<id> fraction=<0..1> window=<ticks>  lose that share of the node's traffic",
    ),
    (
        "crash",
        "fault kind=crash node=<id> window=<ticks>  node is unreachable and abstains from audit votes",
    ),
    (
        "lag",
        "fault kind=lag node=<id> blocks=<n>  node ignores blocks until n more are mined elsewhere",
    ),
];
