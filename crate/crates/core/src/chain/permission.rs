//! Chain-derived account state: key registry, nonces, course ownership and
//! the role permission table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::block::ChainConfig;
use crate::crypto::{AccountId, PublicKey};
use crate::record::{OpError, OpKind, RecordOp, Role, Transaction, REGISTRAR_FIELDS, SELF_SERVICE_FIELDS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AccountRecord {
    pub public_key: PublicKey,
    pub role: Role,
    pub subject_id: String,
    pub name: String,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum TxRejection {
    #[error("bad signature")]
    BadSignature,
    #[error("unknown account")]
    UnknownAccount,
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("permission denied: {0}")]
    PermissionDenied(String),
    #[error("invalid operation: {0}")]
    InvalidOp(String),
    #[error("account already registered")]
    DuplicateAccount,
    #[error("mempool full")]
    MempoolFull,
    #[error("node does not accept user transactions")]
    ReadOnlyNode,
}

impl From<OpError> for TxRejection {
    fn from(e: OpError) -> Self {
        TxRejection::InvalidOp(e.to_string())
    }
}

/// Which op kinds each role may submit, before ownership sub-checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermissionTable(BTreeMap<Role, BTreeSet<OpKind>>);

impl Default for PermissionTable {
    fn default() -> Self {
        use OpKind::*;
        let mut t = BTreeMap::new();
        t.insert(Role::Student, BTreeSet::from([UpdateProfile]));
        t.insert(Role::Staff, BTreeSet::from([UpsertGrade, AttachFile]));
        t.insert(
            Role::Registrar,
            BTreeSet::from([RegisterStudent, RegisterCourse, RegisterAccount, UpdateProfile]),
        );
        t.insert(Role::Auditor, BTreeSet::from([AuditRepair]));
        PermissionTable(t)
    }
}

impl PermissionTable {
    pub fn permits(&self, role: Role, kind: OpKind) -> bool {
        self.0.get(&role).map_or(false, |s| s.contains(&kind))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny(String),
}

/// State derived from the canonical chain only; never from the database.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainState {
    accounts: BTreeMap<AccountId, AccountRecord>,
    nonces: BTreeMap<AccountId, u64>,
    staff: BTreeSet<String>,
    course_owner: BTreeMap<String, String>,
    table: PermissionTable,
}

impl ChainState {
    pub fn genesis(cfg: &ChainConfig) -> Self {
        let mut s = ChainState {
            accounts: BTreeMap::new(),
            nonces: BTreeMap::new(),
            staff: BTreeSet::new(),
            course_owner: BTreeMap::new(),
            table: PermissionTable::default(),
        };
        for a in &cfg.genesis_accounts {
            s.register(a.public_key, a.role, &a.subject_id, &a.name);
        }
        s
    }

    fn register(&mut self, pk: PublicKey, role: Role, subject: &str, name: &str) {
        if role == Role::Staff {
            self.staff.insert(subject.to_owned());
        }
        self.accounts.insert(
            pk.account_id(),
            AccountRecord {
                public_key: pk,
                role,
                subject_id: subject.to_owned(),
                name: name.to_owned(),
            },
        );
    }

    pub fn account(&self, id: &AccountId) -> Option<&AccountRecord> {
        self.accounts.get(id)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&AccountId, &AccountRecord)> {
        self.accounts.iter()
    }

    pub fn nonce(&self, id: &AccountId) -> u64 {
        self.nonces.get(id).copied().unwrap_or(0)
    }

    pub fn nonces(&self) -> &BTreeMap<AccountId, u64> {
        &self.nonces
    }

    pub fn course_owner(&self, course: &str) -> Option<&str> {
        self.course_owner.get(course).map(String::as_str)
    }

    /// Role and ownership check for `actor` performing `op`.
    pub fn check_permission(&self, actor: &AccountId, op: &RecordOp) -> Result<Decision, TxRejection> {
        let acct = self.accounts.get(actor).ok_or(TxRejection::UnknownAccount)?;
        if !self.table.permits(acct.role, op.kind()) {
            return Ok(Decision::Deny(format!("{} may not {}", acct.role, op.kind())));
        }
        let decision = match (acct.role, op) {
            (Role::Student, RecordOp::UpdateProfile { student_id, field, .. }) => {
                if student_id != &acct.subject_id {
                    Decision::Deny("students may only edit their own profile".into())
                } else if !SELF_SERVICE_FIELDS.contains(&field.as_str()) {
                    Decision::Deny(format!("students may not edit `{field}`"))
                } else {
                    Decision::Allow
                }
            }
            (Role::Registrar, RecordOp::UpdateProfile { field, .. }) => {
                if REGISTRAR_FIELDS.contains(&field.as_str()) {
                    Decision::Allow
                } else {
                    Decision::Deny(format!("registrar may not edit `{field}`"))
                }
            }
            (Role::Staff, RecordOp::UpsertGrade { course_id, .. })
            | (Role::Staff, RecordOp::AttachFile { course_id, .. }) => {
                match self.course_owner.get(course_id) {
                    Some(owner) if owner == &acct.subject_id => Decision::Allow,
                    Some(_) => Decision::Deny(format!("course `{course_id}` is owned by another staff member")),
                    None => Decision::Deny(format!("unknown course `{course_id}`")),
                }
            }
            _ => Decision::Allow,
        };
        Ok(decision)
    }

    /// Every check except the signature: registration, nonce, op shape, permission.
    /// `expected_nonce` lets the mempool account for pending transactions.
    pub fn check_tx_with_nonce(&self, tx: &Transaction, expected_nonce: u64) -> Result<(), TxRejection> {
        tx.op.validate()?;
        if !self.accounts.contains_key(&tx.sender) {
            return Err(TxRejection::UnknownAccount);
        }
        if tx.nonce != expected_nonce {
            return Err(TxRejection::BadNonce {
                expected: expected_nonce,
                got: tx.nonce,
            });
        }
        if let RecordOp::RegisterAccount { public_key, .. } = &tx.op {
            if self.accounts.contains_key(&public_key.account_id()) {
                return Err(TxRejection::DuplicateAccount);
            }
        }
        match self.check_permission(&tx.sender, &tx.op)? {
            Decision::Allow => Ok(()),
            Decision::Deny(reason) => Err(TxRejection::PermissionDenied(reason)),
        }
    }

    pub fn check_tx(&self, tx: &Transaction) -> Result<(), TxRejection> {
        self.check_tx_with_nonce(tx, self.nonce(&tx.sender))
    }

    /// Advances the state past an accepted transaction.
    pub fn apply_tx(&mut self, tx: &Transaction) {
        *self.nonces.entry(tx.sender).or_insert(0) += 1;
        match &tx.op {
            RecordOp::RegisterAccount {
                public_key,
                role,
                subject_id,
                name,
            } => self.register(*public_key, *role, subject_id, name),
            RecordOp::RegisterCourse {
                course_id,
                owner_staff_id,
                ..
            } => {
                if self.staff.contains(owner_staff_id) && !self.course_owner.contains_key(course_id) {
                    self.course_owner.insert(course_id.clone(), owner_staff_id.clone());
                }
            }
            _ => {}
        }
    }
}
