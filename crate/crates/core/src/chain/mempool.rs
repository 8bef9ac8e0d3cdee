use std::collections::{BTreeMap, VecDeque};

use crate::crypto::AccountId;
use crate::record::Transaction;

/// Pending transactions in arrival order, unique per (sender, nonce).
#[derive(Clone, Debug)]
pub struct Mempool {
    pending: VecDeque<Transaction>,
    index: BTreeMap<(AccountId, u64), ()>,
    capacity: usize,
}

pub const DEFAULT_MEMPOOL_CAPACITY: usize = 10_000;

impl Default for Mempool {
    fn default() -> Self {
        Mempool::with_capacity(DEFAULT_MEMPOOL_CAPACITY)
    }
}

impl Mempool {
    pub fn with_capacity(capacity: usize) -> Self {
        Mempool {
            pending: VecDeque::new(),
            index: BTreeMap::new(),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.pending.len() >= self.capacity
    }

    pub fn contains(&self, sender: &AccountId, nonce: u64) -> bool {
        self.index.contains_key(&(*sender, nonce))
    }

    /// Number of pending transactions from `sender`.
    pub fn pending_from(&self, sender: &AccountId) -> u64 {
        self.index.range((*sender, 0)..=(*sender, u64::MAX)).count() as u64
    }

    /// Appends a transaction. Returns `false` for a duplicate (sender, nonce).
    /// On overflow the oldest entry is evicted.
    pub fn push(&mut self, tx: Transaction) -> bool {
        let key = (tx.sender, tx.nonce);
        if self.index.contains_key(&key) {
            return false;
        }
        if self.pending.len() >= self.capacity {
            if let Some(old) = self.pending.pop_front() {
                self.index.remove(&(old.sender, old.nonce));
            }
        }
        self.index.insert(key, ());
        self.pending.push_back(tx);
        true
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter()
    }

    /// Removes every entry for which `keep` returns false.
    pub fn retain(&mut self, mut keep: impl FnMut(&Transaction) -> bool) {
        let index = &mut self.index;
        self.pending.retain(|tx| {
            let k = keep(tx);
            if !k {
                index.remove(&(tx.sender, tx.nonce));
            }
            k
        });
    }

    /// Candidate order for block building (arrival order).
    pub fn ordered(&self) -> Vec<Transaction> {
        self.pending.iter().cloned().collect()
    }

    /// Puts transactions from abandoned blocks back in front of newer arrivals,
    /// sorted by (sender, nonce). Overflow evicts from the front.
    pub fn requeue(&mut self, mut txs: Vec<Transaction>) {
        txs.sort_by_key(|t| (t.sender, t.nonce));
        let rest: Vec<Transaction> = self.pending.drain(..).collect();
        self.index.clear();
        for tx in txs.into_iter().chain(rest) {
            self.push(tx);
        }
    }
}
