//! Core of an education-records ledger: per-university private chains, the
//! final-state store they drive, the inter-university consortium log, the hub
//! that bridges the two, and the cross-node consistency audit.

pub mod audit;
pub mod block;
pub mod chain;
pub mod consortium;
pub mod crypto;
pub mod encoding;
pub mod hash;
pub mod hub;
pub mod record;
pub mod store;
pub mod target;

pub use block::{Block, BlockHeader, ChainConfig, GenesisAccount, Violation};
pub use chain::{ImportOutcome, NodeEvent, PrivateNode, TxRejection};
pub use crypto::{AccountId, KeyPair, PublicKey, Signature};
pub use encoding::{canonical_encode, Canonical, Fields, Value};
pub use hash::{Hash128, Hash256};
pub use record::{RecordOp, Role, Transaction};
pub use store::FinalStateDb;
pub use target::Target;
