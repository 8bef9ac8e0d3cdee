//! What the gateway routes onto.

use std::collections::BTreeSet;

use educhain_core::audit::{run_audit_round, AuditConfig, AuditError, AuditLocks, AuditReport, ReportStore};
use educhain_core::consortium::MemberLog;
use educhain_core::hub::{verify_credential, Verification};
use educhain_core::store::schema::Table;
use educhain_core::{Fields, PrivateNode};

pub trait Backend: Send {
    fn node_ids(&self) -> Vec<String>;
    fn is_up(&self, node: &str) -> bool;
    fn node(&self, id: &str) -> Option<&PrivateNode>;
    fn node_mut(&mut self, id: &str) -> Option<&mut PrivateNode>;
    /// Checks a credential against the verifier's consortium view; `None`
    /// when this deployment has no such view.
    fn verify(&self, fields: &Fields) -> Option<Verification>;
    fn run_audit(&mut self, tables: &[Table], round_id: &str) -> Result<Vec<AuditReport>, AuditError>;
    fn audit_reports(&self) -> Vec<AuditReport>;
    /// Current time in seconds on the deployment's clock.
    fn now(&self) -> u64;
}

/// Nodes held in process, a verifier log view, and an audit service.
pub struct LocalBackend {
    pub nodes: Vec<PrivateNode>,
    pub down: BTreeSet<String>,
    pub verifier_log: Option<MemberLog>,
    pub audit: AuditConfig,
    pub locks: AuditLocks,
    pub reports: ReportStore,
    pub clock: u64,
}

impl LocalBackend {
    pub fn new(nodes: Vec<PrivateNode>, audit: AuditConfig) -> Self {
        LocalBackend {
            nodes,
            down: BTreeSet::new(),
            verifier_log: None,
            audit,
            locks: AuditLocks::default(),
            reports: ReportStore::default(),
            clock: 0,
        }
    }

    /// Mines pending transactions on `producer` and delivers the block to every up node.
    pub fn mine(&mut self, producer: &str) -> bool {
        let Some(i) = self.nodes.iter().position(|n| n.id() == producer) else {
            return false;
        };
        let Ok(block) = self.nodes[i].produce_block() else {
            return false;
        };
        for (j, n) in self.nodes.iter_mut().enumerate() {
            if j != i && !self.down.contains(n.id()) {
                let _ = n.import_block(block.clone());
            }
        }
        true
    }
}

impl Backend for LocalBackend {
    fn node_ids(&self) -> Vec<String> {
        self.nodes.iter().map(|n| n.id().to_owned()).collect()
    }

    fn is_up(&self, node: &str) -> bool {
        !self.down.contains(node) && self.nodes.iter().any(|n| n.id() == node)
    }

    fn node(&self, id: &str) -> Option<&PrivateNode> {
        self.nodes.iter().find(|n| n.id() == id)
    }

    fn node_mut(&mut self, id: &str) -> Option<&mut PrivateNode> {
        self.nodes.iter_mut().find(|n| n.id() == id)
    }

    fn verify(&self, fields: &Fields) -> Option<Verification> {
        self.verifier_log.as_ref().map(|log| verify_credential(log, fields))
    }

    fn run_audit(&mut self, tables: &[Table], round_id: &str) -> Result<Vec<AuditReport>, AuditError> {
        let down = self.down.clone();
        let reachable = move |id: &str| !down.contains(id);
        let reports = run_audit_round(&mut self.nodes, &reachable, tables, &self.audit, round_id, &self.locks)?;
        self.reports.push_all(reports.clone());
        Ok(reports)
    }

    fn audit_reports(&self) -> Vec<AuditReport> {
        self.reports.all().to_vec()
    }

    fn now(&self) -> u64 {
        self.clock
    }
}
