//! Cross-node consistency audit of the final-state databases.
//!
//! A round collects one signed digest vote per node and table, takes the
//! strict-majority digest, and checks it against the replay of the longest
//! valid chain. Replay always wins: the vote is only trusted when it agrees.
//! Divergent nodes that are merely behind are resynced; the rest are
//! localized by chunked checksum narrowing and repaired row by row, each
//! repair also submitted as an `AuditRepair` transaction.

pub mod localize;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::chain::{replay, Decision, PrivateNode, TxRejection};
use crate::crypto::{verifies, KeyPair, PublicKey, Signature};
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::{Hash128, Hash256};
use crate::record::{RecordOp, Transaction};
use crate::store::schema::{RowKey, Table};
use crate::store::{row_to_json, FinalStateDb, LogContext, WHOLE_ROW};

pub use localize::{localize_divergence, LocalizeError, Localization, Presence};

pub const DEFAULT_CHUNK_SIZE: usize = 64;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum AuditError {
    #[error("no nodes reachable")]
    NoNodesReachable,
    #[error("no valid chain available")]
    ChainUnavailable,
    #[error("an audit round is already running for {0}")]
    RoundInProgress(String),
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("stale fix for {table} {row_key} `{field}`")]
    StaleFix {
        table: String,
        row_key: String,
        field: String,
    },
    #[error("repair failed: {0}")]
    RepairFailed(String),
    #[error("repair transaction rejected: {0}")]
    Submit(TxRejection),
}

/// One node's signed statement of its table digest in a round.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DigestVote {
    pub round_id: String,
    pub node_id: String,
    pub table: Table,
    pub digest: Hash128,
    pub signature: Signature,
}

impl DigestVote {
    fn signing_fields(round_id: &str, node_id: &str, table: Table, digest: &Hash128) -> Fields {
        Fields::new()
            .with("roundId", round_id)
            .with("nodeId", node_id)
            .with("table", table.name())
            .with("digest", Value::Bytes(digest.0.to_vec()))
    }

    pub fn verify(&self, key: &PublicKey) -> bool {
        let bytes = Self::signing_fields(&self.round_id, &self.node_id, self.table, &self.digest).encode();
        verifies(key, &bytes, &self.signature)
    }
}

impl Canonical for DigestVote {
    fn fields(&self) -> Fields {
        Self::signing_fields(&self.round_id, &self.node_id, self.table, &self.digest)
            .with("signature", Value::Bytes(self.signature.0.to_vec()))
    }
}

/// The vote `node` casts for `table`, signed by its operator key.
pub fn cast_vote(node: &PrivateNode, table: Table, round_id: &str) -> DigestVote {
    let digest = node.db().table_digest(table);
    let bytes = DigestVote::signing_fields(round_id, node.id(), table, &digest).encode();
    DigestVote {
        round_id: round_id.to_owned(),
        node_id: node.id().to_owned(),
        table,
        digest,
        signature: node.operator().sign(&bytes),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum VoteResponse {
    Vote(DigestVote),
    Unreachable,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Collected {
    pub votes: Vec<DigestVote>,
    pub abstentions: Vec<String>,
    /// Nodes whose vote failed verification or did not match the request.
    pub discarded: Vec<String>,
}

/// Keeps one verified vote per node; unreachable nodes abstain.
pub fn collect_digests(
    registry: &BTreeMap<String, PublicKey>,
    responses: Vec<(String, VoteResponse)>,
    table: Table,
    round_id: &str,
) -> Result<Collected, AuditError> {
    let mut out = Collected::default();
    let mut seen = BTreeSet::new();
    for (node, response) in responses {
        match response {
            VoteResponse::Unreachable => out.abstentions.push(node),
            VoteResponse::Vote(v) => {
                let valid = v.node_id == node
                    && v.table == table
                    && v.round_id == round_id
                    && registry.get(&node).map_or(false, |k| v.verify(k))
                    && !seen.contains(&node);
                if valid {
                    seen.insert(node);
                    out.votes.push(v);
                } else {
                    out.discarded.push(node);
                }
            }
        }
    }
    if out.votes.is_empty() && out.discarded.is_empty() {
        return Err(AuditError::NoNodesReachable);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Consensus {
    Digest(Hash128),
    Ambiguous,
}

/// Strict-majority digest among the votes cast, and the voters that differ from it.
pub fn vote_consensus(votes: &[DigestVote]) -> (Consensus, BTreeSet<String>) {
    let mut tally: BTreeMap<Hash128, usize> = BTreeMap::new();
    for v in votes {
        *tally.entry(v.digest).or_default() += 1;
    }
    let winner = tally
        .iter()
        .find(|(_, &n)| 2 * n > votes.len())
        .map(|(d, _)| *d);
    match winner {
        Some(d) => (
            Consensus::Digest(d),
            votes
                .iter()
                .filter(|v| v.digest != d)
                .map(|v| v.node_id.clone())
                .collect(),
        ),
        None => (Consensus::Ambiguous, BTreeSet::new()),
    }
}

/// Final-state database replayed from the longest valid chain among the nodes.
#[derive(Clone, Debug)]
pub struct Oracle {
    pub db: FinalStateDb,
    pub height: u64,
    pub source_node: String,
}

pub fn build_oracle<'a>(nodes: impl IntoIterator<Item = &'a PrivateNode>) -> Result<Oracle, AuditError> {
    let mut candidates: Vec<&PrivateNode> = nodes.into_iter().collect();
    candidates.sort_by(|a, b| b.height().cmp(&a.height()).then_with(|| a.id().cmp(b.id())));
    for node in candidates {
        if let Ok(r) = replay(&node.chain(), node.config()) {
            return Ok(Oracle {
                db: r.db,
                height: node.height(),
                source_node: node.id().to_owned(),
            });
        }
    }
    Err(AuditError::ChainUnavailable)
}

impl Oracle {
    /// Authoritative text of each row (JSON, or empty when the row must not exist).
    pub fn adjudicate(&self, table: Table, keys: &[RowKey]) -> BTreeMap<RowKey, String> {
        keys.iter()
            .map(|k| (k.clone(), self.db.current_value(table, k, WHOLE_ROW)))
            .collect()
    }
}

/// One corrective write.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Fix {
    pub table: Table,
    pub row_key: RowKey,
    pub field: String,
    pub old_value: String,
    pub new_value: String,
}

/// Field-level fixes turning `local`'s rows at `keys` into the oracle's.
pub fn plan_fixes(local: &FinalStateDb, oracle: &FinalStateDb, table: Table, keys: &[RowKey]) -> Vec<Fix> {
    let mut fixes = Vec::new();
    for key in keys {
        match (local.row(table, key), oracle.row(table, key)) {
            (Some(l), Some(o)) => {
                for (field, _) in table.schema().fields {
                    if table.schema().is_key_field(field) {
                        continue;
                    }
                    let lv = l.get(field).map(Value::render).unwrap_or_default();
                    let ov = o.get(field).map(Value::render).unwrap_or_default();
                    if lv != ov {
                        fixes.push(Fix {
                            table,
                            row_key: key.clone(),
                            field: (*field).to_owned(),
                            old_value: lv,
                            new_value: ov,
                        });
                    }
                }
            }
            (l, o) if l.is_some() || o.is_some() => fixes.push(Fix {
                table,
                row_key: key.clone(),
                field: WHOLE_ROW.to_owned(),
                old_value: l.map(row_to_json).unwrap_or_default(),
                new_value: o.map(row_to_json).unwrap_or_default(),
            }),
            _ => {}
        }
    }
    fixes
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepairOutcome {
    pub applied: u32,
    pub txs: Vec<Transaction>,
}

/// Applies `fixes` to `node`'s database and builds one `AuditRepair`
/// transaction per fix. Every fix is checked before any is applied.
pub fn repair(
    node: &mut PrivateNode,
    auditor: &KeyPair,
    audit_id: &str,
    fixes: &[Fix],
    first_nonce: u64,
) -> Result<RepairOutcome, AuditError> {
    let probe = RecordOp::AuditRepair {
        table: Table::Grades.name().into(),
        row_key: "-".into(),
        field: WHOLE_ROW.into(),
        old_value: String::new(),
        new_value: String::new(),
        audit_id: audit_id.into(),
    };
    match node.check_permission(&auditor.account_id(), &probe) {
        Ok(Decision::Allow) => {}
        Ok(Decision::Deny(reason)) => return Err(AuditError::PermissionDenied(reason)),
        Err(e) => return Err(AuditError::PermissionDenied(e.to_string())),
    }
    for f in fixes {
        if node.db().current_value(f.table, &f.row_key, &f.field) != f.old_value {
            return Err(AuditError::StaleFix {
                table: f.table.name().into(),
                row_key: f.row_key.render(),
                field: f.field.clone(),
            });
        }
    }
    let mut out = RepairOutcome::default();
    let now = node.clock();
    let height = node.height();
    for (i, f) in fixes.iter().enumerate() {
        node.db_mut()
            .apply_fix(f.table, &f.row_key, &f.field, &f.new_value)
            .map_err(|e| AuditError::RepairFailed(e.to_string()))?;
        let tx = Transaction::signed(
            auditor,
            first_nonce + i as u64,
            RecordOp::AuditRepair {
                table: f.table.name().into(),
                row_key: f.row_key.render(),
                field: f.field.clone(),
                old_value: f.old_value.clone(),
                new_value: f.new_value.clone(),
                audit_id: audit_id.into(),
            },
            now,
        );
        node.db_mut().log_local(
            "AuditRepair",
            LogContext {
                actor: auditor.account_id(),
                time: now,
                block_number: height,
            },
            tx.hash(),
        );
        out.applied += 1;
        out.txs.push(tx);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum AdjudicationSource {
    MajorityVote,
    ReplayOracle,
}

impl AdjudicationSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdjudicationSource::MajorityVote => "MajorityVote",
            AdjudicationSource::ReplayOracle => "ReplayOracle",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum NodeFinding {
    /// Database differs from the chain it holds.
    Tampered,
    /// Chain was behind by this many blocks; resynced instead of repaired.
    MissingBlocks(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LocalizedRow {
    pub row_key: RowKey,
    pub presence: Presence,
    pub local_value: String,
    pub authoritative_value: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditReport {
    pub round_id: String,
    pub table: Table,
    /// Outcome of the vote alone.
    pub vote_outcome: Consensus,
    /// The digest the round converged on; always the replay digest.
    pub consensus_digest: Hash128,
    pub votes: Vec<DigestVote>,
    pub abstentions: Vec<String>,
    pub discarded_votes: Vec<String>,
    pub divergent_nodes: BTreeSet<String>,
    pub findings: BTreeMap<String, NodeFinding>,
    pub localized_rows: BTreeMap<String, Vec<LocalizedRow>>,
    pub adjudication_source: AdjudicationSource,
    pub repairs_applied: u32,
    pub repair_txs: Vec<Hash256>,
    pub first_pass_exchanges: u32,
    pub narrowing_exchanges: u32,
    pub narrowing_levels: u32,
    pub errors: Vec<String>,
}

impl Canonical for AuditReport {
    fn fields(&self) -> Fields {
        let strings = |v: &mut dyn Iterator<Item = &String>| Value::List(v.map(|s| Value::from(s.as_str())).collect());
        let mut findings = Fields::new();
        for (node, f) in &self.findings {
            let text = match f {
                NodeFinding::Tampered => "Tampered".to_owned(),
                NodeFinding::MissingBlocks(n) => format!("MissingBlocks:{n}"),
            };
            findings.insert(node.clone(), text);
        }
        let mut localized = Fields::new();
        for (node, rows) in &self.localized_rows {
            localized.insert(
                node.clone(),
                Value::List(
                    rows.iter()
                        .map(|r| {
                            Value::Map(
                                Fields::new()
                                    .with("rowKey", r.row_key.render())
                                    .with("presence", r.presence.as_str())
                                    .with("localValue", r.local_value.as_str())
                                    .with("authoritativeValue", r.authoritative_value.as_str()),
                            )
                        })
                        .collect(),
                ),
            );
        }
        let mut f = Fields::new()
            .with("roundId", self.round_id.as_str())
            .with("table", self.table.name())
            .with("consensusDigest", Value::Bytes(self.consensus_digest.0.to_vec()))
            .with(
                "votes",
                Value::List(self.votes.iter().map(|v| Value::Map(v.fields())).collect()),
            )
            .with("abstentions", strings(&mut self.abstentions.iter()))
            .with("discardedVotes", strings(&mut self.discarded_votes.iter()))
            .with("divergentNodes", strings(&mut self.divergent_nodes.iter()))
            .with("findings", findings)
            .with("localizedRows", localized)
            .with("adjudicationSource", self.adjudication_source.as_str())
            .with("repairsApplied", self.repairs_applied)
            .with(
                "repairTxs",
                Value::List(self.repair_txs.iter().map(|h| Value::Bytes(h.0.to_vec())).collect()),
            )
            .with("firstPassExchanges", self.first_pass_exchanges)
            .with("narrowingExchanges", self.narrowing_exchanges)
            .with("narrowingLevels", self.narrowing_levels)
            .with("errors", strings(&mut self.errors.iter()));
        match self.vote_outcome {
            Consensus::Digest(d) => f.insert("voteOutcome", Value::Bytes(d.0.to_vec())),
            Consensus::Ambiguous => f.insert("voteOutcome", "Ambiguous"),
        }
        f
    }
}

/// Tables with a round in progress. Clones share the lock set.
#[derive(Clone, Debug, Default)]
pub struct AuditLocks(Arc<Mutex<BTreeSet<Table>>>);

pub struct AuditGuard {
    locks: AuditLocks,
    tables: Vec<Table>,
}

impl AuditLocks {
    pub fn acquire(&self, tables: &[Table]) -> Result<AuditGuard, AuditError> {
        let mut held = self.0.lock().unwrap();
        if let Some(t) = tables.iter().find(|t| held.contains(t)) {
            return Err(AuditError::RoundInProgress(t.name().into()));
        }
        held.extend(tables.iter().copied());
        Ok(AuditGuard {
            locks: self.clone(),
            tables: tables.to_vec(),
        })
    }
}

impl Drop for AuditGuard {
    fn drop(&mut self) {
        let mut held = self.locks.0.lock().unwrap();
        for t in &self.tables {
            held.remove(t);
        }
    }
}

#[derive(Clone, Debug)]
pub struct AuditConfig {
    pub chunk_size: usize,
    pub auditor: KeyPair,
}

/// Runs one round over `nodes` for `tables`. `reachable` decides which nodes answer.
///
/// Every repair transaction of the round goes through one submitter, the
/// first reachable node that accepts user transactions, so the auditor's
/// nonces stay consecutive in a single mempool.
pub fn run_audit_round(
    nodes: &mut [PrivateNode],
    reachable: &dyn Fn(&str) -> bool,
    tables: &[Table],
    cfg: &AuditConfig,
    round_id: &str,
    locks: &AuditLocks,
) -> Result<Vec<AuditReport>, AuditError> {
    let _guard = locks.acquire(tables)?;
    let registry: BTreeMap<String, PublicKey> = nodes
        .iter()
        .map(|n| (n.id().to_owned(), n.operator().public()))
        .collect();

    let mut collected = Vec::new();
    for &table in tables {
        let responses = nodes
            .iter()
            .map(|n| {
                let r = if reachable(n.id()) {
                    VoteResponse::Vote(cast_vote(n, table, round_id))
                } else {
                    VoteResponse::Unreachable
                };
                (n.id().to_owned(), r)
            })
            .collect();
        collected.push(collect_digests(&registry, responses, table, round_id)?);
    }

    let oracle = build_oracle(nodes.iter().filter(|n| reachable(n.id())))?;
    let oracle_chain = nodes
        .iter()
        .find(|n| n.id() == oracle.source_node)
        .map(|n| n.chain())
        .unwrap_or_default();

    // Resync lagging replicas before any row-level comparison.
    let mut lag: BTreeMap<String, u64> = BTreeMap::new();
    for n in nodes.iter_mut().filter(|n| reachable(n.id())) {
        if n.height() < oracle.height {
            lag.insert(n.id().to_owned(), oracle.height - n.height());
            for b in oracle_chain.iter().skip(1) {
                let _ = n.import_block(b.clone());
            }
        }
    }

    let submitter = nodes
        .iter()
        .position(|n| reachable(n.id()) && n.accepts_user_txs());

    let mut reports = Vec::new();
    for (&table, c) in tables.iter().zip(collected) {
        let replay_digest = oracle.db.table_digest(table);
        let (vote_outcome, _) = vote_consensus(&c.votes);
        let source = if vote_outcome == Consensus::Digest(replay_digest) {
            AdjudicationSource::MajorityVote
        } else {
            AdjudicationSource::ReplayOracle
        };
        let divergent: BTreeSet<String> = c
            .votes
            .iter()
            .filter(|v| v.digest != replay_digest)
            .map(|v| v.node_id.clone())
            .collect();
        let mut report = AuditReport {
            round_id: round_id.to_owned(),
            table,
            vote_outcome,
            consensus_digest: replay_digest,
            votes: c.votes,
            abstentions: c.abstentions,
            discarded_votes: c.discarded,
            divergent_nodes: divergent.clone(),
            findings: BTreeMap::new(),
            localized_rows: BTreeMap::new(),
            adjudication_source: source,
            repairs_applied: 0,
            repair_txs: Vec::new(),
            first_pass_exchanges: 0,
            narrowing_exchanges: 0,
            narrowing_levels: 0,
            errors: Vec::new(),
        };

        for node_id in &divergent {
            let idx = nodes.iter().position(|n| n.id() == node_id).unwrap();
            if nodes[idx].db().table_digest(table) == replay_digest {
                if let Some(missing) = lag.get(node_id) {
                    report
                        .findings
                        .insert(node_id.clone(), NodeFinding::MissingBlocks(*missing));
                }
                continue;
            }
            report.findings.insert(node_id.clone(), NodeFinding::Tampered);
            let reference = nodes
                .iter()
                .find(|n| reachable(n.id()) && n.db().table_digest(table) == replay_digest)
                .map(|n| n.db())
                .unwrap_or(&oracle.db);
            let loc = match localize_divergence(nodes[idx].db(), reference, table, cfg.chunk_size) {
                Ok(loc) => loc,
                Err(e) => {
                    report.errors.push(format!("{node_id}: {e}"));
                    continue;
                }
            };
            report.first_pass_exchanges += loc.first_pass_exchanges;
            report.narrowing_exchanges += loc.narrowing_exchanges;
            report.narrowing_levels = report.narrowing_levels.max(loc.levels);
            let keys: Vec<RowKey> = loc.keys.iter().map(|(k, _)| k.clone()).collect();
            let authoritative = oracle.adjudicate(table, &keys);
            report.localized_rows.insert(
                node_id.clone(),
                loc.keys
                    .iter()
                    .map(|(k, p)| LocalizedRow {
                        row_key: k.clone(),
                        presence: *p,
                        local_value: nodes[idx].db().current_value(table, k, WHOLE_ROW),
                        authoritative_value: authoritative[k].clone(),
                    })
                    .collect(),
            );

            let fixes = plan_fixes(nodes[idx].db(), &oracle.db, table, &keys);
            let Some(submit_idx) = submitter else {
                report.errors.push(format!("{node_id}: no node accepts repair transactions"));
                continue;
            };
            let nonce = nodes[submit_idx].next_nonce(&cfg.auditor.account_id());
            let audit_id = format!("{round_id}/{}", table.name());
            match repair(&mut nodes[idx], &cfg.auditor, &audit_id, &fixes, nonce) {
                Ok(outcome) => {
                    report.repairs_applied += outcome.applied;
                    for tx in outcome.txs {
                        match nodes[submit_idx].submit_transaction(tx) {
                            Ok(h) => report.repair_txs.push(h),
                            Err(e) => report.errors.push(format!("{node_id}: {e}")),
                        }
                    }
                    if nodes[idx].db().table_digest(table) != replay_digest {
                        report
                            .errors
                            .push(format!("{node_id}: digest still differs after repair"));
                    }
                }
                Err(e) => report.errors.push(format!("{node_id}: {e}")),
            }
        }
        reports.push(report);
    }
    Ok(reports)
}

/// Completed reports, retrievable by round.
#[derive(Clone, Debug, Default)]
pub struct ReportStore {
    reports: Vec<AuditReport>,
}

impl ReportStore {
    pub fn push_all(&mut self, reports: impl IntoIterator<Item = AuditReport>) {
        self.reports.extend(reports);
    }

    pub fn all(&self) -> &[AuditReport] {
        &self.reports
    }

    pub fn round(&self, round_id: &str) -> Vec<&AuditReport> {
        self.reports.iter().filter(|r| r.round_id == round_id).collect()
    }
}
