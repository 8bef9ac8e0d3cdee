use serde::{Deserialize, Serialize};

use crate::crypto::AccountId;
use crate::hash::Hash256;
use crate::record::{OpKind, RecordOp};

/// One applied transaction, in chain order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainEvent {
    pub block_height: u64,
    pub tx_hash: Hash256,
    pub op: RecordOp,
    pub actor: AccountId,
    pub timestamp: u64,
}

/// What subscribers receive. `Rollback { height }` discards everything above
/// `height`; events of the replacing branch follow it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeEvent {
    Applied(ChainEvent),
    Rollback { height: u64 },
}

/// Set of op kinds a subscriber wants. Empty means everything.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventFilter(pub Vec<OpKind>);

impl EventFilter {
    pub fn all() -> Self {
        EventFilter(Vec::new())
    }

    pub fn only(kinds: impl IntoIterator<Item = OpKind>) -> Self {
        EventFilter(kinds.into_iter().collect())
    }

    /// Rollbacks always pass the filter.
    pub fn matches(&self, ev: &NodeEvent) -> bool {
        match ev {
            NodeEvent::Rollback { .. } => true,
            NodeEvent::Applied(e) => self.0.is_empty() || self.0.contains(&e.op.kind()),
        }
    }
}
