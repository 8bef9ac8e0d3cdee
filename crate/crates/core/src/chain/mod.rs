//! Per-university private chain node.
//!
//! A [`PrivateNode`] owns its chain, mempool and final-state database and is
//! driven by a single caller. It never talks to peers directly: accepted
//! transactions, produced blocks and parent requests are queued in an outbox
//! that the transport drains.
//!
//! Fork choice is longest chain with first-seen tie-break. A switch to a
//! longer branch emits `Rollback { height }` to subscribers, rebuilds the
//! database from the retained prefix and then emits the new branch's events.

pub mod events;
pub mod mempool;
pub mod permission;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::mpsc::{channel, Receiver, Sender};

use crate::block::{
    pow_seal, tx_root, validate_block, validate_chain, Block, BlockHeader, ChainConfig, ConfigError,
    PowError, Violation,
};
use crate::crypto::{AccountId, KeyPair};
use crate::hash::Hash256;
use crate::record::{RecordOp, Transaction};
use crate::store::{ContentStore, FinalStateDb};

pub use events::{ChainEvent, EventFilter, NodeEvent};
pub use mempool::Mempool;
pub use permission::{AccountRecord, ChainState, Decision, PermissionTable, TxRejection};

pub type NodeId = String;

const MAX_ORPHANS: usize = 4096;

/// Messages a node wants delivered to its peers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outbound {
    Tx(Transaction),
    Block(Block),
    RequestBlock(Hash256),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImportOutcome {
    /// Extended the canonical tip.
    Applied,
    /// Switched to a longer branch; `depth` blocks above `fork_height` were rolled back.
    Reorganized { fork_height: u64, depth: u64 },
    /// Valid, stored, not canonical (first-seen wins on equal length).
    SideChain,
    /// Parent unknown; buffered until it arrives.
    Queued,
    Known,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ProduceError {
    #[error("nothing to mine")]
    NothingToMine,
    #[error(transparent)]
    Pow(#[from] PowError),
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("invalid chain at height {height}: {violations:?}")]
    InvalidChain {
        height: u64,
        violations: Vec<Violation>,
    },
}

#[derive(Clone, Debug)]
pub struct PrivateNode {
    id: NodeId,
    department: String,
    cfg: ChainConfig,
    operator: KeyPair,
    blocks: HashMap<Hash256, Block>,
    canonical: Vec<Hash256>,
    orphans: BTreeMap<Hash256, Vec<Block>>,
    orphan_count: usize,
    invalid: HashSet<Hash256>,
    tx_index: HashMap<Hash256, u64>,
    state: ChainState,
    pending_state: ChainState,
    mempool: Mempool,
    db: FinalStateDb,
    content: ContentStore,
    subscribers: Vec<(EventFilter, Sender<NodeEvent>)>,
    outbox: Vec<Outbound>,
    clock: u64,
    accepts_user_txs: bool,
}

impl PrivateNode {
    pub fn new(
        id: impl Into<NodeId>,
        department: impl Into<String>,
        cfg: ChainConfig,
        operator: KeyPair,
    ) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let genesis = cfg.genesis_block();
        let gh = genesis.hash();
        let state = ChainState::genesis(&cfg);
        let mut blocks = HashMap::new();
        blocks.insert(gh, genesis);
        Ok(PrivateNode {
            id: id.into(),
            department: department.into(),
            cfg,
            operator,
            blocks,
            canonical: vec![gh],
            orphans: BTreeMap::new(),
            orphan_count: 0,
            invalid: HashSet::new(),
            tx_index: HashMap::new(),
            pending_state: state.clone(),
            state,
            mempool: Mempool::default(),
            db: FinalStateDb::new(),
            content: ContentStore::new(),
            subscribers: Vec::new(),
            outbox: Vec::new(),
            clock: 0,
            accepts_user_txs: true,
        })
    }

    /// A replica that follows the chain but refuses user transactions (hub nodes).
    pub fn read_only(mut self) -> Self {
        self.accepts_user_txs = false;
        self
    }

    pub fn with_mempool_capacity(mut self, capacity: usize) -> Self {
        self.mempool = Mempool::with_capacity(capacity);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn department(&self) -> &str {
        &self.department
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn operator(&self) -> &KeyPair {
        &self.operator
    }

    pub fn accepts_user_txs(&self) -> bool {
        self.accepts_user_txs
    }

    pub fn set_clock(&mut self, now_ms: u64) {
        self.clock = now_ms;
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn db(&self) -> &FinalStateDb {
        &self.db
    }

    /// Direct database access, bypassing the chain. For fault injection and audit repair.
    pub fn db_mut(&mut self) -> &mut FinalStateDb {
        &mut self.db
    }

    pub fn content(&self) -> &ContentStore {
        &self.content
    }

    pub fn content_mut(&mut self) -> &mut ContentStore {
        &mut self.content
    }

    pub fn tip(&self) -> &BlockHeader {
        &self.blocks[self.canonical.last().unwrap()].header
    }

    pub fn tip_hash(&self) -> Hash256 {
        *self.canonical.last().unwrap()
    }

    pub fn height(&self) -> u64 {
        (self.canonical.len() - 1) as u64
    }

    pub fn block(&self, hash: &Hash256) -> Option<&Block> {
        self.blocks.get(hash)
    }

    pub fn block_at(&self, height: u64) -> Option<&Block> {
        self.canonical.get(height as usize).map(|h| &self.blocks[h])
    }

    /// The canonical chain from genesis to tip.
    pub fn chain(&self) -> Vec<Block> {
        self.canonical.iter().map(|h| self.blocks[h].clone()).collect()
    }

    /// Height of the block that included `tx_hash`, if it is canonical.
    pub fn inclusion_height(&self, tx_hash: &Hash256) -> Option<u64> {
        self.tx_index.get(tx_hash).copied()
    }

    pub fn take_outbox(&mut self) -> Vec<Outbound> {
        std::mem::take(&mut self.outbox)
    }

    pub fn orphan_count(&self) -> usize {
        self.orphan_count
    }

    /// Every matching event from now on, exactly once, in chain order.
    pub fn subscribe_events(&mut self, filter: EventFilter) -> Receiver<NodeEvent> {
        let (tx, rx) = channel();
        self.subscribers.push((filter, tx));
        rx
    }

    /// Next nonce `account` should use, counting pending transactions.
    pub fn next_nonce(&self, account: &AccountId) -> u64 {
        self.pending_state.nonce(account)
    }

    pub fn check_permission(&self, actor: &AccountId, op: &RecordOp) -> Result<Decision, TxRejection> {
        self.pending_state.check_permission(actor, op)
    }

    /// User-facing submission. Accepted transactions enter the mempool and are gossiped.
    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<Hash256, TxRejection> {
        if !self.accepts_user_txs {
            return Err(TxRejection::ReadOnlyNode);
        }
        let hash = self.accept_tx(tx.clone())?;
        self.outbox.push(Outbound::Tx(tx));
        Ok(hash)
    }

    /// A transaction gossiped by a peer. Same checks, no re-broadcast.
    pub fn receive_tx(&mut self, tx: Transaction) -> Result<Hash256, TxRejection> {
        if !self.accepts_user_txs {
            return Err(TxRejection::ReadOnlyNode);
        }
        self.accept_tx(tx)
    }

    fn accept_tx(&mut self, tx: Transaction) -> Result<Hash256, TxRejection> {
        if !tx.signature_valid() {
            return Err(TxRejection::BadSignature);
        }
        self.pending_state.check_tx(&tx)?;
        if self.mempool.is_full() {
            return Err(TxRejection::MempoolFull);
        }
        let hash = tx.hash();
        self.pending_state.apply_tx(&tx);
        self.mempool.push(tx);
        Ok(hash)
    }

    /// Seals a block from pending transactions on the current tip and applies it.
    pub fn produce_block(&mut self) -> Result<Block, ProduceError> {
        let mut sim = self.state.clone();
        let mut txs = Vec::new();
        for tx in self.mempool.ordered() {
            if txs.len() == self.cfg.max_tx_per_block {
                break;
            }
            if sim.check_tx(&tx).is_ok() {
                sim.apply_tx(&tx);
                txs.push(tx);
            }
        }
        if txs.is_empty() {
            self.refresh_pending();
            return Err(ProduceError::NothingToMine);
        }
        let parent = self.tip().clone();
        let header = BlockHeader {
            height: parent.height + 1,
            parent_hash: parent.hash(),
            tx_root: tx_root(&txs),
            timestamp: self.clock.max(parent.timestamp),
            difficulty_target: self.cfg.initial_difficulty_target,
            pow_nonce: 0,
            miner_id: self.operator.account_id(),
        };
        let header = pow_seal(&header, self.cfg.initial_difficulty_target)?;
        let block = Block { header, txs };
        let hash = block.hash();
        self.blocks.insert(hash, block.clone());
        self.connect_tip(hash, sim);
        self.outbox.push(Outbound::Block(block.clone()));
        Ok(block)
    }

    /// Imports a block from a peer.
    pub fn import_block(&mut self, block: Block) -> Result<ImportOutcome, Vec<Violation>> {
        let outcome = self.import_one(block.clone())?;
        if !matches!(outcome, ImportOutcome::Queued | ImportOutcome::Known) {
            self.adopt_orphans(block.hash());
        }
        Ok(outcome)
    }

    fn import_one(&mut self, block: Block) -> Result<ImportOutcome, Vec<Violation>> {
        let hash = block.hash();
        if self.blocks.contains_key(&hash) {
            return Ok(ImportOutcome::Known);
        }
        if self.invalid.contains(&hash) || self.invalid.contains(&block.header.parent_hash) {
            self.invalid.insert(hash);
            return Err(vec![Violation::BadParentLink]);
        }
        let Some(parent) = self.blocks.get(&block.header.parent_hash) else {
            return Ok(self.queue_orphan(block));
        };
        if let Err(v) = validate_block(&block, &parent.header, &self.cfg) {
            self.invalid.insert(hash);
            return Err(v);
        }
        let height = block.height();
        let extends_tip = block.header.parent_hash == self.tip_hash();
        self.blocks.insert(hash, block);

        if extends_tip {
            let mut next = self.state.clone();
            if let Err(v) = check_block_txs(&mut next, &self.blocks[&hash]) {
                self.blocks.remove(&hash);
                self.invalid.insert(hash);
                return Err(v);
            }
            self.connect_tip(hash, next);
            return Ok(ImportOutcome::Applied);
        }
        if height > self.height() {
            return self.reorganize(hash);
        }
        self.adopt_side_txs(hash);
        Ok(ImportOutcome::SideChain)
    }

    /// Transactions carried only by a side branch go back into the mempool, so
    /// the next local block includes them and the tie between branches breaks.
    fn adopt_side_txs(&mut self, hash: Hash256) {
        if !self.accepts_user_txs {
            return;
        }
        let txs = self.blocks[&hash].txs.clone();
        for tx in txs {
            if self.inclusion_height(&tx.hash()).is_none() {
                let _ = self.accept_tx(tx);
            }
        }
    }

    fn queue_orphan(&mut self, block: Block) -> ImportOutcome {
        let parent = block.header.parent_hash;
        let list = self.orphans.entry(parent).or_default();
        if !list.iter().any(|b| b.hash() == block.hash()) && self.orphan_count < MAX_ORPHANS {
            list.push(block);
            self.orphan_count += 1;
        }
        self.outbox.push(Outbound::RequestBlock(parent));
        ImportOutcome::Queued
    }

    fn adopt_orphans(&mut self, parent: Hash256) {
        let mut work = vec![parent];
        while let Some(p) = work.pop() {
            if let Some(children) = self.orphans.remove(&p) {
                self.orphan_count -= children.len();
                for child in children {
                    let h = child.hash();
                    if let Ok(outcome) = self.import_one(child) {
                        if !matches!(outcome, ImportOutcome::Queued | ImportOutcome::Known) {
                            work.push(h);
                        }
                    }
                }
            }
        }
    }

    /// Makes the stored block `hash`, whose parent is the tip, canonical.
    fn connect_tip(&mut self, hash: Hash256, next_state: ChainState) {
        self.canonical.push(hash);
        self.state = next_state;
        let block = self.blocks[&hash].clone();
        self.emit_block(&block);
        self.refresh_pending();
    }

    fn reorganize(&mut self, new_tip: Hash256) -> Result<ImportOutcome, Vec<Violation>> {
        let on_canonical = |node: &Self, h: &Hash256| {
            node.blocks
                .get(h)
                .map_or(false, |b| node.canonical.get(b.height() as usize) == Some(h))
        };
        let mut branch = Vec::new();
        let mut cursor = new_tip;
        while !on_canonical(self, &cursor) {
            branch.push(cursor);
            cursor = self.blocks[&cursor].header.parent_hash;
        }
        branch.reverse();
        let fork_height = self.blocks[&cursor].height();

        let mut next = ChainState::genesis(&self.cfg);
        for h in &self.canonical[1..=fork_height as usize] {
            for tx in &self.blocks[h].txs {
                next.apply_tx(tx);
            }
        }
        for (i, h) in branch.iter().enumerate() {
            if let Err(v) = check_block_txs(&mut next, &self.blocks[h]) {
                for bad in &branch[i..] {
                    self.blocks.remove(bad);
                    self.invalid.insert(*bad);
                }
                return Err(v);
            }
        }

        let abandoned: Vec<Hash256> = self.canonical.split_off(fork_height as usize + 1);
        let depth = abandoned.len() as u64;
        let branch_txs: HashSet<Hash256> = branch
            .iter()
            .flat_map(|h| self.blocks[h].txs.iter().map(Transaction::hash))
            .collect();
        let requeue: Vec<Transaction> = abandoned
            .iter()
            .flat_map(|h| self.blocks[h].txs.clone())
            .filter(|tx| !branch_txs.contains(&tx.hash()))
            .collect();
        for h in &abandoned {
            for tx in &self.blocks[h].txs {
                self.tx_index.remove(&tx.hash());
            }
        }
        self.state = next;

        self.db.reset_for_rollback(fork_height, self.clock);
        for h in &self.canonical[1..] {
            let block = &self.blocks[h];
            for ev in block_events(block) {
                self.db.apply_silently(&ev);
            }
        }
        self.notify(&NodeEvent::Rollback {
            height: fork_height,
        });
        for h in branch {
            self.canonical.push(h);
            let block = self.blocks[&h].clone();
            self.emit_block(&block);
        }
        self.mempool.requeue(requeue);
        self.refresh_pending();
        Ok(ImportOutcome::Reorganized { fork_height, depth })
    }

    fn emit_block(&mut self, block: &Block) {
        for ev in block_events(block) {
            self.tx_index.insert(ev.tx_hash, ev.block_height);
            let _ = self.db.apply_event(&ev);
            self.notify(&NodeEvent::Applied(ev));
        }
    }

    fn notify(&mut self, ev: &NodeEvent) {
        self.subscribers
            .retain(|(filter, tx)| !filter.matches(ev) || tx.send(ev.clone()).is_ok());
    }

    /// Drops mempool entries that can no longer apply and rebuilds the pending view.
    fn refresh_pending(&mut self) {
        let mut pending = self.state.clone();
        self.mempool.retain(|tx| {
            if pending.check_tx(tx).is_ok() {
                pending.apply_tx(tx);
                true
            } else {
                false
            }
        });
        self.pending_state = pending;
    }
}

fn check_block_txs(state: &mut ChainState, block: &Block) -> Result<(), Vec<Violation>> {
    for (index, tx) in block.txs.iter().enumerate() {
        if let Err(e) = state.check_tx(tx) {
            return Err(vec![Violation::TxRejected {
                index,
                reason: e.to_string(),
            }]);
        }
        state.apply_tx(tx);
    }
    Ok(())
}

/// Events of a block's transactions, in order.
pub fn block_events(block: &Block) -> Vec<ChainEvent> {
    block
        .txs
        .iter()
        .map(|tx| ChainEvent {
            block_height: block.height(),
            tx_hash: tx.hash(),
            op: tx.op.clone(),
            actor: tx.sender,
            timestamp: tx.timestamp,
        })
        .collect()
}

/// Chain state and database rebuilt from scratch.
#[derive(Clone, Debug)]
pub struct Replayed {
    pub state: ChainState,
    pub db: FinalStateDb,
}

/// Validates `chain` link by link and folds every event into fresh state.
pub fn replay(chain: &[Block], cfg: &ChainConfig) -> Result<Replayed, ReplayError> {
    let mut state = ChainState::genesis(cfg);
    let mut db = FinalStateDb::new();
    validate_chain(chain, cfg)
        .map_err(|(height, violations)| ReplayError::InvalidChain { height, violations })?;
    for block in chain.iter().skip(1) {
        check_block_txs(&mut state, block).map_err(|violations| ReplayError::InvalidChain {
            height: block.height(),
            violations,
        })?;
        for ev in block_events(block) {
            let _ = db.apply_event(&ev);
        }
    }
    Ok(Replayed { state, db })
}

/// The database a chain implies. This is the audit's adjudication oracle.
pub fn replay_state(chain: &[Block], cfg: &ChainConfig) -> Result<FinalStateDb, ReplayError> {
    replay(chain, cfg).map(|r| r.db)
}
