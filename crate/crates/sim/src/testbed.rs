//! The testbed: universities of department nodes and a hub, the Ministry,
//! one ordering service, and the simulated network between nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use educhain_core::audit::{AuditConfig, AuditLocks, ReportStore};
use educhain_core::block::validate_chain;
use educhain_core::chain::{replay_state, Outbound};
use educhain_core::consortium::transfer::BoxKeyPair;
use educhain_core::consortium::{ConsortiumEntry, Member, MemberId, MemberLog, Membership, OrderingService};
use educhain_core::hash::digest_sha256;
use educhain_core::hub::HubNode;
use educhain_core::record::Role;
use educhain_core::store::schema::Table;
use educhain_core::store::WHOLE_ROW;
use educhain_core::target::Target;
use educhain_core::{
    ChainConfig, GenesisAccount, Hash128, Hash256, ImportOutcome, KeyPair, PrivateNode, RecordOp, Transaction,
};
use educhain_gateway::{ApiRequest, ApiResponse, Backend, Gateway, GatewaySettings, LocalBackend, RouteTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use crate::config::NetworkConfig;
use crate::fault::{FaultKind, FaultSpec};
use crate::net::{Envelope, MessageStats, Network};
use crate::SimError;

/// Department names given to nodes `n0..n4`; further nodes get `dept<i>`.
const DEPARTMENTS: [&str; 5] = ["registrar", "cs", "math", "physics", "library"];

/// 32 key-seed bytes for `label` under the run seed.
pub fn derive_seed(seed: u64, label: &str) -> [u8; 32] {
    let mut bytes = seed.to_be_bytes().to_vec();
    bytes.extend_from_slice(label.as_bytes());
    digest_sha256(&bytes).0
}

/// A signing identity the harness drives through a gateway.
#[derive(Clone, Debug)]
pub struct User {
    pub key: KeyPair,
    pub role: Role,
    pub subject: String,
    pub dept: Option<String>,
    pub password: String,
    pub token: Option<String>,
}

pub struct University {
    pub name: String,
    pub member: MemberId,
    pub gateway: Arc<Gateway<LocalBackend>>,
    pub hub: HubNode,
    pub hub_node: String,
    pub node_ids: Vec<String>,
    pub peers: BTreeMap<String, Vec<String>>,
    pub wallet: BTreeMap<String, User>,
    pub chain_cfg: ChainConfig,
    pub blocks_mined: u64,
}

impl University {
    pub fn department_of(&self, node: &str) -> Option<String> {
        let i = self.node_ids.iter().position(|n| n == node)?;
        Some(department(i))
    }
}

fn department(i: usize) -> String {
    DEPARTMENTS.get(i).map_or_else(|| format!("dept{i}"), |d| (*d).to_owned())
}

#[derive(Clone, Debug)]
enum Active {
    Crash { node: String, until: u64 },
    Drop { node: String, fraction: f64, until: u64 },
    Lag { node: String, remaining: u64 },
}

pub struct Testbed {
    pub cfg: NetworkConfig,
    rng: ChaCha8Rng,
    now: u64,
    pub universities: Vec<University>,
    pub ordering: OrderingService,
    pub ministry: MemberLog,
    net: Network,
    active: Vec<Active>,
    pub fault_log: Vec<String>,
    /// Transactions accepted through a gateway, by university.
    pub submitted: Vec<(usize, Hash256)>,
    channel_seq: u64,
}

fn genesis(key: &KeyPair, role: Role, subject: &str) -> GenesisAccount {
    GenesisAccount {
        public_key: key.public(),
        role,
        subject_id: subject.into(),
        name: subject.into(),
    }
}

/// Neighbour lists: each node links to the three nearest on either side of
/// a ring, capped at `max_peers`; the hub links to `n0` and `n1`.
fn topology(ids: &[String], hub: &str, max_peers: usize) -> BTreeMap<String, Vec<String>> {
    let n = ids.len();
    let mut peers: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let hub_links: Vec<usize> = (0..n.min(2)).collect();
    for i in 0..n {
        let cap = if hub_links.contains(&i) { max_peers - 1 } else { max_peers };
        let mut list: Vec<String> = Vec::new();
        for d in 1..=3 {
            for j in [(i + d) % n, (i + n - d % n) % n] {
                if j != i && !list.contains(&ids[j]) && list.len() < cap {
                    list.push(ids[j].clone());
                }
            }
        }
        if hub_links.contains(&i) {
            list.push(hub.to_owned());
        }
        peers.insert(ids[i].clone(), list);
    }
    peers.insert(hub.to_owned(), hub_links.iter().map(|&i| ids[i].clone()).collect());
    peers
}

impl Testbed {
    /// Builds the deployment at genesis. Every key derives from the seed.
    pub fn build(cfg: NetworkConfig) -> Result<Testbed, SimError> {
        cfg.validate()?;
        let seed = cfg.seed;
        let key = |label: &str| KeyPair::from_seed(derive_seed(seed, label));
        let boxkey = |label: &str| BoxKeyPair::from_seed(derive_seed(seed, label));
        let target = Target::from_difficulty(cfg.difficulty)
            .ok_or_else(|| SimError::ConfigInvalid("difficulty must be positive".into()))?;

        let names: Vec<String> = (1..=cfg.universities).map(|k| format!("U{k}")).collect();
        let mut members = Vec::new();
        let mut hub_keys = Vec::new();
        for name in &names {
            let signing = key(&format!("{name}/hub"));
            let boxing = boxkey(&format!("{name}/hub-box"));
            let id = MemberId::new(name.as_str(), &signing.public());
            members.push(Member {
                id: id.clone(),
                signing_key: signing.public(),
                box_key: boxing.public(),
            });
            hub_keys.push((id, signing, boxing));
        }
        let moe = key("MOE/sign");
        members.push(Member {
            id: MemberId::new("MOE", &moe.public()),
            signing_key: moe.public(),
            box_key: boxkey("MOE/box").public(),
        });
        let membership = Membership::new(members);
        let ordering = OrderingService::new(key("ordering"), membership.clone());
        let log = || MemberLog::new(membership.clone(), ordering.public_key());

        let mut universities = Vec::new();
        for (k, (name, (member, signing, boxing))) in names.iter().zip(hub_keys).enumerate() {
            let registrar = key(&format!("{name}/registrar"));
            let auditor = key(&format!("{name}/auditor"));
            let audit_service = key(&format!("{name}/audit-service"));
            let mut extra = vec![0x54, 0x21];
            extra.extend_from_slice(name.as_bytes());
            let chain_cfg = ChainConfig {
                initial_difficulty_target: target,
                max_peers: cfg.max_peers,
                genesis_extra_data: extra,
                genesis_accounts: vec![
                    genesis(&registrar, Role::Registrar, "REG"),
                    genesis(&auditor, Role::Auditor, "AUD"),
                    genesis(&audit_service, Role::Auditor, "AUDIT-SVC"),
                ],
                ..ChainConfig::default()
            };
            let node_ids: Vec<String> = (0..cfg.nodes_per_university).map(|i| format!("{name}-n{i}")).collect();
            let mut nodes = Vec::new();
            for (i, id) in node_ids.iter().enumerate() {
                let op = key(&format!("{id}/operator"));
                nodes.push(
                    PrivateNode::new(id.clone(), department(i), chain_cfg.clone(), op)
                        .map_err(|e| SimError::ConfigInvalid(e.to_string()))?,
                );
            }
            let hub_node = format!("{name}-hub");
            let replica = PrivateNode::new(hub_node.clone(), "hub", chain_cfg.clone(), key(&format!("{hub_node}/operator")))
                .map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
            let hub = HubNode::new(member.clone(), signing, boxing, replica, log());

            let mut backend = LocalBackend::new(
                nodes,
                AuditConfig {
                    chunk_size: cfg.chunk_size,
                    auditor: audit_service,
                },
            );
            backend.verifier_log = Some(log());
            let mut routes = RouteTable::new(node_ids[0].clone());
            for (i, id) in node_ids.iter().enumerate() {
                routes = routes.with(department(i), id.clone());
            }
            let gateway = Gateway::new(backend, routes, GatewaySettings::default(), Some(seed ^ (k as u64 + 1)));
            let mut wallet = BTreeMap::new();
            for (label, kp, role, subject, dept) in [
                ("registrar", registrar, Role::Registrar, "REG", Some("registrar")),
                ("auditor", auditor, Role::Auditor, "AUD", None),
            ] {
                let password = password_for(seed, name, label);
                gateway.set_password(kp.account_id(), &password);
                wallet.insert(
                    label.to_owned(),
                    User {
                        key: kp,
                        role,
                        subject: subject.into(),
                        dept: dept.map(str::to_owned),
                        password,
                        token: None,
                    },
                );
            }
            let peers = topology(&node_ids, &hub_node, cfg.max_peers);
            universities.push(University {
                name: name.clone(),
                member,
                gateway: Arc::new(gateway),
                hub,
                hub_node,
                node_ids,
                peers,
                wallet,
                chain_cfg,
                blocks_mined: 0,
            });
        }
        Ok(Testbed {
            rng: ChaCha8Rng::seed_from_u64(seed),
            ministry: log(),
            cfg,
            now: 0,
            universities,
            ordering,
            net: Network::default(),
            active: Vec::new(),
            fault_log: Vec::new(),
            submitted: Vec::new(),
            channel_seq: 0,
        })
    }

    /// An independent copy of the whole deployment. Sessions are not copied.
    pub fn fork(&self) -> Testbed {
        let universities = self
            .universities
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let b = u.gateway.backend();
                let backend = LocalBackend {
                    nodes: b.nodes.clone(),
                    down: b.down.clone(),
                    verifier_log: b.verifier_log.clone(),
                    audit: b.audit.clone(),
                    locks: AuditLocks::default(),
                    reports: ReportStore::default(),
                    clock: b.clock,
                };
                drop(b);
                let mut routes = RouteTable::new(u.node_ids[0].clone());
                for (i, id) in u.node_ids.iter().enumerate() {
                    routes = routes.with(department(i), id.clone());
                }
                let gateway = Gateway::new(backend, routes, GatewaySettings::default(), Some(self.cfg.seed ^ (k as u64 + 1)));
                let mut wallet = u.wallet.clone();
                for user in wallet.values_mut() {
                    gateway.set_password(user.key.account_id(), &user.password);
                    user.token = None;
                }
                University {
                    name: u.name.clone(),
                    member: u.member.clone(),
                    gateway: Arc::new(gateway),
                    hub: u.hub.clone(),
                    hub_node: u.hub_node.clone(),
                    node_ids: u.node_ids.clone(),
                    peers: u.peers.clone(),
                    wallet,
                    chain_cfg: u.chain_cfg.clone(),
                    blocks_mined: u.blocks_mined,
                }
            })
            .collect();
        Testbed {
            cfg: self.cfg.clone(),
            rng: self.rng.clone(),
            now: self.now,
            universities,
            ordering: self.ordering.clone(),
            ministry: self.ministry.clone(),
            net: self.net.clone(),
            active: self.active.clone(),
            fault_log: self.fault_log.clone(),
            submitted: self.submitted.clone(),
            channel_seq: self.channel_seq,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn stats(&self) -> &MessageStats {
        &self.net.stats
    }

    pub fn uni_index(&self, name: &str) -> Result<usize, SimError> {
        self.universities
            .iter()
            .position(|u| u.name == name)
            .ok_or_else(|| SimError::UnknownTarget(name.to_owned()))
    }

    /// University index of a department or hub node.
    pub fn node_uni(&self, node: &str) -> Result<usize, SimError> {
        self.universities
            .iter()
            .position(|u| u.hub_node == node || u.node_ids.iter().any(|n| n == node))
            .ok_or_else(|| SimError::UnknownTarget(node.to_owned()))
    }

    pub fn now_ms(&self) -> u64 {
        self.now * self.cfg.clock_step_ms
    }

    // ---- faults -------------------------------------------------------

    fn crashed(&self, node: &str) -> bool {
        self.active.iter().any(|a| matches!(a, Active::Crash { node: n, until } if n == node && self.now < *until))
    }

    pub fn lagging(&self, node: &str) -> bool {
        self.active.iter().any(|a| matches!(a, Active::Lag { node: n, .. } if n == node))
    }

    fn drop_fraction(&self, node: &str) -> f64 {
        self.active
            .iter()
            .filter_map(|a| match a {
                Active::Drop { node: n, fraction, until } if n == node && self.now < *until => Some(*fraction),
                _ => None,
            })
            .fold(0.0, f64::max)
    }

    /// Live means not crashed; lagging nodes are live.
    pub fn is_live(&self, node: &str) -> bool {
        !self.crashed(node)
    }

    /// Applies `fault` now and records it.
    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<(), SimError> {
        let kind = &fault.kind;
        let u = self.node_uni(kind.node())?;
        let at = fault.scheduled_at;
        match kind {
            FaultKind::TamperRow {
                node,
                table,
                row_key,
                field,
                new_value,
            } => {
                let gw = self.universities[u].gateway.clone();
                let mut b = gw.backend();
                let n = b.node_mut(node).ok_or_else(|| SimError::UnknownTarget(node.clone()))?;
                let db = n.db_mut();
                if field == WHOLE_ROW && new_value.is_empty() {
                    if !db.tamper_delete_row(*table, row_key) {
                        return Err(SimError::UnknownTarget(format!("{node} {} {row_key}", table.name())));
                    }
                } else if field == WHOLE_ROW {
                    db.apply_fix(*table, row_key, field, new_value)
                        .map_err(|e| SimError::UnknownTarget(e.to_string()))?;
                } else {
                    if db.row(*table, row_key).is_none() {
                        return Err(SimError::UnknownTarget(format!("{node} {} {row_key}", table.name())));
                    }
                    db.tamper_set_field(*table, row_key, field, new_value)
                        .map_err(|e| SimError::UnknownTarget(e.to_string()))?;
                }
            }
            FaultKind::DropMessages { node, fraction, window } => self.active.push(Active::Drop {
                node: node.clone(),
                fraction: *fraction,
                until: at + window,
            }),
            FaultKind::CrashNode { node, window } => {
                if self.universities[u].hub_node == *node {
                    return Err(SimError::UnknownTarget(format!("{node} is a hub; crash a department node")));
                }
                self.active.push(Active::Crash {
                    node: node.clone(),
                    until: at + window,
                });
                self.sync_down();
            }
            FaultKind::LagNode { node, blocks } => self.active.push(Active::Lag {
                node: node.clone(),
                remaining: *blocks,
            }),
        }
        self.fault_log.push(format!("@{at} {kind}"));
        Ok(())
    }

    fn sync_down(&mut self) {
        for u in &self.universities {
            let down: BTreeSet<String> = u.node_ids.iter().filter(|n| self.crashed(n)).cloned().collect();
            u.gateway.backend().down = down;
        }
    }

    // ---- transport ----------------------------------------------------

    fn send(&mut self, uni: usize, from: &str, to: &str, msg: Outbound) {
        let hub = &self.universities[uni].hub_node;
        if to == hub && matches!(msg, Outbound::Tx(_)) {
            return;
        }
        self.net.count_sent(&msg);
        let lost = self.crashed(from)
            || self.crashed(to)
            || (matches!(msg, Outbound::Block(_)) && self.lagging(to))
            || {
                let f = self.drop_fraction(from).max(self.drop_fraction(to));
                f > 0.0 && self.rng.gen_bool(f)
            }
            || (self.cfg.loss_rate > 0.0 && self.rng.gen_bool(self.cfg.loss_rate));
        if lost {
            self.net.stats.dropped += 1;
            return;
        }
        let latency = (self.cfg.latency_min, self.cfg.latency_max);
        let env = Envelope {
            uni,
            from: from.to_owned(),
            to: to.to_owned(),
            msg,
        };
        self.net.enqueue(&mut self.rng, self.now, latency, env);
    }

    fn broadcast(&mut self, uni: usize, from: &str, msg: Outbound, except: Option<&str>) {
        let peers = self.universities[uni].peers.get(from).cloned().unwrap_or_default();
        for p in peers.iter().filter(|p| Some(p.as_str()) != except) {
            self.send(uni, from, p, msg.clone());
        }
    }

    /// Runs `f` on a department node or the hub replica.
    fn with_node<R>(&mut self, uni: usize, id: &str, f: impl FnOnce(&mut PrivateNode) -> R) -> Option<R> {
        let u = &mut self.universities[uni];
        if u.hub_node == id {
            return Some(f(u.hub.replica_mut()));
        }
        let gw = u.gateway.clone();
        let mut b = gw.backend();
        b.node_mut(id).map(f)
    }

    /// Sends whatever the nodes of `uni` queued: user and repair transactions,
    /// mined blocks, and requests for missing parents.
    pub fn pump(&mut self, uni: usize) {
        let mut ids = self.universities[uni].node_ids.clone();
        ids.push(self.universities[uni].hub_node.clone());
        for id in ids {
            let out = self.with_node(uni, &id, |n| n.take_outbox()).unwrap_or_default();
            for msg in out {
                if let Outbound::Tx(tx) = &msg {
                    self.submitted.push((uni, tx.hash()));
                }
                self.broadcast(uni, &id, msg, None);
            }
        }
    }

    fn deliver(&mut self, env: Envelope) {
        let Envelope { uni, from, to, msg } = env;
        if self.crashed(&to) || (matches!(msg, Outbound::Block(_)) && self.lagging(&to)) {
            self.net.stats.dropped += 1;
            return;
        }
        self.net.stats.delivered += 1;
        let (relay, reply, outbox) = self
            .with_node(uni, &to, |node| {
                let mut relay = None;
                let mut reply = None;
                match msg {
                    Outbound::Tx(tx) => {
                        if node.receive_tx(tx.clone()).is_ok() {
                            relay = Some(Outbound::Tx(tx));
                        }
                    }
                    Outbound::Block(b) => {
                        let outcome = node.import_block(b.clone());
                        if matches!(
                            outcome,
                            Ok(ImportOutcome::Applied | ImportOutcome::Reorganized { .. } | ImportOutcome::SideChain)
                        ) {
                            relay = Some(Outbound::Block(b));
                        }
                    }
                    Outbound::RequestBlock(h) => reply = node.block(&h).cloned().map(Outbound::Block),
                }
                (relay, reply, node.take_outbox())
            })
            .unwrap_or((None, None, Vec::new()));
        if let Some(m) = relay {
            self.broadcast(uni, &to, m, Some(&from));
        }
        if let Some(m) = reply {
            self.send(uni, &to, &from, m);
        }
        for m in outbox {
            match m {
                Outbound::RequestBlock(_) => self.send(uni, &to, &from, m),
                other => self.broadcast(uni, &to, other, None),
            }
        }
    }

    // ---- clock --------------------------------------------------------

    /// Advances one tick: clocks, fault windows, deliveries, then mining.
    pub fn step(&mut self) {
        self.now += 1;
        let ms = self.now_ms();
        for u in &mut self.universities {
            u.hub.replica_mut().set_clock(ms);
            let mut b = u.gateway.backend();
            b.clock = ms / 1000;
            for n in &mut b.nodes {
                n.set_clock(ms);
            }
        }
        let now = self.now;
        self.active.retain(|a| match a {
            Active::Crash { until, .. } | Active::Drop { until, .. } => now < *until,
            Active::Lag { .. } => true,
        });
        self.sync_down();
        // Picks up writes that reached a gateway from outside the harness.
        for uni in 0..self.universities.len() {
            self.pump(uni);
        }
        while let Some(env) = self.net.pop_due(now) {
            self.deliver(env);
        }
        if now % self.cfg.block_interval == 0 {
            for uni in 0..self.universities.len() {
                self.mine(uni);
                self.anti_entropy(uni);
            }
        }
    }

    pub fn advance_to(&mut self, tick: u64) {
        while self.now < tick {
            self.step();
        }
    }

    /// Nodes that take part in mining and in convergence checks.
    fn active_nodes(&self, uni: usize) -> Vec<String> {
        self.universities[uni]
            .node_ids
            .iter()
            .filter(|n| self.is_live(n) && !self.lagging(n))
            .cloned()
            .collect()
    }

    /// Draws one miner among the active nodes holding pending transactions.
    fn mine(&mut self, uni: usize) {
        let gw = self.universities[uni].gateway.clone();
        let candidates: Vec<String> = {
            let b = gw.backend();
            self.active_nodes(uni)
                .into_iter()
                .filter(|id| b.node(id).map_or(false, |n| !n.mempool().is_empty()))
                .collect()
        };
        if candidates.is_empty() {
            return;
        }
        let miner = candidates[self.rng.gen_range(0..candidates.len())].clone();
        let mined = gw.backend().node_mut(&miner).map_or(false, |n| n.produce_block().is_ok());
        if !mined {
            return;
        }
        self.universities[uni].blocks_mined += 1;
        let ids = self.universities[uni].node_ids.clone();
        let mut ended = Vec::new();
        for a in &mut self.active {
            if let Active::Lag { node, remaining } = a {
                if *node != miner && ids.contains(node) {
                    *remaining = remaining.saturating_sub(1);
                    if *remaining == 0 {
                        ended.push(node.clone());
                    }
                }
            }
        }
        self.active
            .retain(|a| !matches!(a, Active::Lag { remaining: 0, .. }));
        for n in ended {
            self.fault_log.push(format!("@{} lag {n} ends", self.now));
        }
        self.pump(uni);
    }

    /// When tips disagree and nothing is in flight, every active node and the
    /// hub announce their tip so stragglers can fetch what they missed.
    fn anti_entropy(&mut self, uni: usize) {
        if self.net.pending_for(uni) || self.tips_agree(uni) {
            return;
        }
        let mut ids = self.active_nodes(uni);
        ids.push(self.universities[uni].hub_node.clone());
        for id in ids {
            if let Some(Some(tip)) = self.with_node(uni, &id, |n| n.block(&n.tip_hash()).cloned()) {
                if tip.header.height > 0 {
                    self.broadcast(uni, &id, Outbound::Block(tip), None);
                }
            }
        }
    }

    pub fn tips_agree(&self, uni: usize) -> bool {
        let mut tips = self.tips(uni).into_values();
        let first = tips.next();
        tips.all(|t| Some(t) == first)
    }

    /// Tips of active nodes and the hub.
    pub fn tips(&self, uni: usize) -> BTreeMap<String, Hash256> {
        let u = &self.universities[uni];
        let b = u.gateway.backend();
        let mut out: BTreeMap<String, Hash256> = self
            .active_nodes(uni)
            .into_iter()
            .filter_map(|id| b.node(&id).map(|n| (id, n.tip_hash())))
            .collect();
        out.insert(u.hub_node.clone(), u.hub.replica().tip_hash());
        out
    }

    /// True once nothing is in flight, active mempools are empty and tips agree.
    pub fn quiescent(&self) -> bool {
        self.net.is_idle()
            && (0..self.universities.len()).all(|uni| {
                let b = self.universities[uni].gateway.backend();
                let empty = self
                    .active_nodes(uni)
                    .iter()
                    .all(|id| b.node(id).map_or(true, |n| n.mempool().is_empty()));
                drop(b);
                empty && self.tips_agree(uni)
            })
    }

    /// Steps until quiescent; returns the ticks taken, or `None` after `max`.
    pub fn settle(&mut self, max: u64) -> Option<u64> {
        let start = self.now;
        while !self.quiescent() {
            if self.now - start >= max {
                return None;
            }
            self.step();
        }
        Some(self.now - start)
    }

    // ---- consortium ---------------------------------------------------

    /// Hands a sequenced entry to every hub, campus verifier and the Ministry.
    pub fn deliver_entry(&mut self, entry: &ConsortiumEntry) {
        for u in &mut self.universities {
            u.hub.deliver(entry.clone());
            if let Some(log) = u.gateway.backend().verifier_log.as_mut() {
                log.member_validate_and_append(entry.clone());
            }
        }
        self.ministry.member_validate_and_append(entry.clone());
    }

    pub fn next_channel(&mut self) -> String {
        self.channel_seq += 1;
        format!("xfer-{}", self.channel_seq)
    }

    // ---- users --------------------------------------------------------

    pub fn add_user(&mut self, uni: usize, label: &str, role: Role, subject: &str, dept: Option<String>) -> KeyPair {
        let u = &self.universities[uni];
        let key = KeyPair::from_seed(derive_seed(self.cfg.seed, &format!("{}/user/{label}", u.name)));
        let password = password_for(self.cfg.seed, &u.name, label);
        self.universities[uni].wallet.insert(
            label.to_owned(),
            User {
                key: key.clone(),
                role,
                subject: subject.to_owned(),
                dept,
                password,
                token: None,
            },
        );
        key
    }

    pub fn user(&self, uni: usize, label: &str) -> Result<&User, SimError> {
        self.universities[uni]
            .wallet
            .get(label)
            .ok_or_else(|| SimError::UnknownTarget(format!("user {label}")))
    }

    /// One anonymous gateway call, then the resulting traffic is queued.
    pub fn call(&mut self, uni: usize, req: ApiRequest) -> ApiResponse {
        let r = self.universities[uni].gateway.handle(&req);
        self.pump(uni);
        r
    }

    fn login(&mut self, uni: usize, label: &str) -> Result<String, ApiResponse> {
        let user = self.user(uni, label).map_err(|e| ApiResponse {
            status: 404,
            body: json!({"error": {"code": "UnknownUser", "message": e.to_string()}}),
        })?;
        let mut req = ApiRequest::post(
            "/login",
            json!({"accountId": user.key.account_id().to_hex(), "password": user.password}),
        );
        if let Some(d) = &user.dept {
            req = req.department(d.clone());
        }
        let r = self.call(uni, req);
        match r.body["token"].as_str() {
            Some(t) if r.status == 200 => {
                let t = t.to_owned();
                self.universities[uni].wallet.get_mut(label).unwrap().token = Some(t.clone());
                Ok(t)
            }
            _ => Err(r),
        }
    }

    /// A gateway call as `label`, logging in first and again if the session lapsed.
    pub fn call_as(&mut self, uni: usize, label: &str, req: ApiRequest) -> ApiResponse {
        for attempt in 0..2 {
            let cached = self.user(uni, label).ok().and_then(|u| u.token.clone());
            let token = match cached {
                Some(t) => t,
                None => match self.login(uni, label) {
                    Ok(t) => t,
                    Err(r) => return r,
                },
            };
            let dept = self.user(uni, label).ok().and_then(|u| u.dept.clone());
            let mut r = req.clone().token(token);
            if let Some(d) = dept {
                r = r.department(d);
            }
            let resp = self.call(uni, r);
            if attempt == 0 && resp.status == 401 && resp.code() == Some("Unauthenticated") {
                self.universities[uni].wallet.get_mut(label).unwrap().token = None;
                continue;
            }
            return resp;
        }
        unreachable!("second attempt always returns")
    }

    /// `op` signed by `label` with the nonce its routed node expects next.
    pub fn sign_as(&mut self, uni: usize, label: &str, op: RecordOp) -> Result<Json, ApiResponse> {
        let r = self.call_as(uni, label, ApiRequest::get("/account"));
        let nonce = r.body["nextNonce"].as_u64().ok_or(r)?;
        let key = self.user(uni, label).expect("user answered /account").key.clone();
        let tx = Transaction::signed(&key, nonce, op, self.now_ms());
        Ok(serde_json::to_value(tx).expect("transactions serialize"))
    }

    /// Signs `op` as `label` and posts `{tx, ..extra}` to `method target`.
    pub fn write_as(&mut self, uni: usize, label: &str, method: &str, target: &str, op: RecordOp, extra: Json) -> ApiResponse {
        let tx = match self.sign_as(uni, label, op) {
            Ok(tx) => tx,
            Err(r) => return r,
        };
        let mut body = json!({ "tx": tx });
        if let (Json::Object(b), Json::Object(e)) = (&mut body, extra) {
            b.extend(e);
        }
        self.call_as(uni, label, ApiRequest::new(method, target).body(body))
    }

    // ---- inspection ---------------------------------------------------

    /// Table digests of a node's live database.
    pub fn digests(&self, uni: usize, node: &str) -> Option<BTreeMap<Table, Hash128>> {
        let u = &self.universities[uni];
        let digest = |n: &PrivateNode| Table::ALL.iter().map(|t| (*t, n.db().table_digest(*t))).collect();
        if u.hub_node == node {
            return Some(digest(u.hub.replica()));
        }
        u.gateway.backend().node(node).map(digest)
    }

    /// Table digests of a fresh replay of a node's own chain.
    pub fn replay_digests(&self, uni: usize, node: &str) -> Option<BTreeMap<Table, Hash128>> {
        let u = &self.universities[uni];
        let chain = if u.hub_node == node {
            u.hub.replica().chain()
        } else {
            u.gateway.backend().node(node)?.chain()
        };
        let db = replay_state(&chain, &u.chain_cfg).ok()?;
        Some(Table::ALL.iter().map(|t| (*t, db.table_digest(*t))).collect())
    }

    /// Chain-validation failures on any node, as `node: height violations`.
    pub fn chain_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for u in &self.universities {
            let b = u.gateway.backend();
            let mut chains: Vec<(String, Vec<educhain_core::Block>)> =
                b.nodes.iter().map(|n| (n.id().to_owned(), n.chain())).collect();
            drop(b);
            chains.push((u.hub_node.clone(), u.hub.replica().chain()));
            for (id, chain) in chains {
                let mut linked = true;
                for w in chain.windows(2) {
                    if w[1].header.parent_hash != w[0].hash() || w[1].header.height != w[0].header.height + 1 {
                        linked = false;
                    }
                }
                if !linked {
                    out.push(format!("{id}: broken parent link"));
                }
                if let Err((h, v)) = validate_chain(&chain, &u.chain_cfg) {
                    out.push(format!("{id}: height {h} {v:?}"));
                }
            }
        }
        out
    }
}

fn password_for(seed: u64, uni: &str, label: &str) -> String {
    hex::encode(&derive_seed(seed, &format!("{uni}/password/{label}"))[..8])
}
