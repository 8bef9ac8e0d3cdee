//! Simulated transport: a seeded, per-link FIFO message queue on logical time.

use std::collections::BTreeMap;

use educhain_core::chain::Outbound;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct Envelope {
    pub uni: usize,
    pub from: String,
    pub to: String,
    pub msg: Outbound,
}

/// Message counters, by kind where it matters.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub by_kind: BTreeMap<&'static str, u64>,
}

pub fn kind(msg: &Outbound) -> &'static str {
    match msg {
        Outbound::Tx(_) => "tx",
        Outbound::Block(_) => "block",
        Outbound::RequestBlock(_) => "request",
    }
}

/// Delivery order is `(deliver_at, seq)`. A link never reorders: a message
/// leaves no earlier than the one queued on the same link before it.
#[derive(Clone, Debug, Default)]
pub struct Network {
    queue: BTreeMap<(u64, u64), Envelope>,
    seq: u64,
    link_free: BTreeMap<(usize, String, String), u64>,
    pub stats: MessageStats,
}

impl Network {
    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn pending_for(&self, uni: usize) -> bool {
        self.queue.values().any(|e| e.uni == uni)
    }

    /// Queues `env` with a latency drawn from `latency`.
    pub fn enqueue(&mut self, rng: &mut ChaCha8Rng, now: u64, latency: (u64, u64), env: Envelope) {
        let delay = rng.gen_range(latency.0..=latency.1);
        let link = (env.uni, env.from.clone(), env.to.clone());
        let free = self.link_free.get(&link).copied().unwrap_or(0);
        let at = (now + delay).max(free);
        self.link_free.insert(link, at);
        self.seq += 1;
        self.queue.insert((at, self.seq), env);
    }

    /// Next message due at or before `now`.
    pub fn pop_due(&mut self, now: u64) -> Option<Envelope> {
        let (&key, _) = self.queue.first_key_value()?;
        if key.0 > now {
            return None;
        }
        self.queue.remove(&key)
    }

    pub fn count_sent(&mut self, msg: &Outbound) {
        self.stats.sent += 1;
        *self.stats.by_kind.entry(kind(msg)).or_default() += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use educhain_core::Hash256;
    use rand::SeedableRng;

    fn env(to: &str) -> Envelope {
        Envelope {
            uni: 0,
            from: "a".into(),
            to: to.into(),
            msg: Outbound::RequestBlock(Hash256::ZERO),
        }
    }

    #[test]
    fn links_are_fifo_and_due_order_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Network::default();
        for _ in 0..50 {
            net.enqueue(&mut rng, 0, (1, 9), env("b"));
        }
        let mut last = (0, 0);
        let mut n = 0;
        while let Some(_) = net.pop_due(1_000) {
            n += 1;
        }
        assert_eq!(n, 50);
        for i in 0..20 {
            net.enqueue(&mut rng, i, (1, 9), env("b"));
        }
        let keys: Vec<_> = net.queue.keys().copied().collect();
        for k in keys {
            assert!(k >= last);
            last = k;
        }
        assert!(net.pop_due(0).is_none());
    }
}
