//! Record operations and signed transactions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{verifies, AccountId, KeyPair, PublicKey, Signature};
use crate::encoding::{Canonical, Fields};
use crate::hash::{digest_sha256, Hash256};
use crate::store::schema::{Table, ROW_KEY_SEPARATOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Student,
    Staff,
    Registrar,
    Auditor,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Student, Role::Staff, Role::Registrar, Role::Auditor];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Student => "Student",
            Role::Staff => "Staff",
            Role::Registrar => "Registrar",
            Role::Auditor => "Auditor",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "student" => Ok(Role::Student),
            "staff" => Ok(Role::Staff),
            "registrar" => Ok(Role::Registrar),
            "auditor" => Ok(Role::Auditor),
            other => Err(format!("unknown role `{other}`")),
        }
    }
}

/// Student profile fields a student may edit on their own record.
pub const SELF_SERVICE_FIELDS: [&str; 3] = ["telephone", "email", "address"];
/// Student profile fields only the registrar may edit.
pub const REGISTRAR_FIELDS: [&str; 3] = ["name", "program", "degreeAwarded"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpKind {
    RegisterStudent,
    RegisterCourse,
    RegisterAccount,
    UpdateProfile,
    UpsertGrade,
    AttachFile,
    AuditRepair,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::RegisterStudent,
        OpKind::RegisterCourse,
        OpKind::RegisterAccount,
        OpKind::UpdateProfile,
        OpKind::UpsertGrade,
        OpKind::AttachFile,
        OpKind::AuditRepair,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            OpKind::RegisterStudent => "RegisterStudent",
            OpKind::RegisterCourse => "RegisterCourse",
            OpKind::RegisterAccount => "RegisterAccount",
            OpKind::UpdateProfile => "UpdateProfile",
            OpKind::UpsertGrade => "UpsertGrade",
            OpKind::AttachFile => "AttachFile",
            OpKind::AuditRepair => "AuditRepair",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all_fields = "camelCase")]
pub enum RecordOp {
    RegisterStudent {
        student_id: String,
        name: String,
        program: String,
    },
    RegisterCourse {
        course_id: String,
        title: String,
        term: String,
        owner_staff_id: String,
    },
    /// Binds a public key to a role. `subject_id` is the student or staff id the key acts for.
    RegisterAccount {
        public_key: PublicKey,
        role: Role,
        subject_id: String,
        name: String,
    },
    UpdateProfile {
        student_id: String,
        field: String,
        value: String,
    },
    UpsertGrade {
        student_id: String,
        course_id: String,
        term: String,
        score: u8,
        letter: String,
    },
    AttachFile {
        student_id: String,
        course_id: String,
        cid: Hash256,
        media_label: String,
        size: u64,
    },
    AuditRepair {
        table: String,
        row_key: String,
        field: String,
        old_value: String,
        new_value: String,
        audit_id: String,
    },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OpError {
    #[error("score {0} outside 0..=100")]
    ScoreOutOfRange(u8),
    #[error("unknown profile field `{0}`")]
    UnknownProfileField(String),
    #[error("empty identifier in `{0}`")]
    EmptyId(&'static str),
    #[error("identifier `{0}` contains the reserved separator")]
    ReservedCharacter(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
}

impl RecordOp {
    pub fn kind(&self) -> OpKind {
        match self {
            RecordOp::RegisterStudent { .. } => OpKind::RegisterStudent,
            RecordOp::RegisterCourse { .. } => OpKind::RegisterCourse,
            RecordOp::RegisterAccount { .. } => OpKind::RegisterAccount,
            RecordOp::UpdateProfile { .. } => OpKind::UpdateProfile,
            RecordOp::UpsertGrade { .. } => OpKind::UpsertGrade,
            RecordOp::AttachFile { .. } => OpKind::AttachFile,
            RecordOp::AuditRepair { .. } => OpKind::AuditRepair,
        }
    }

    /// Stateless well-formedness: score range, schema field names, key hygiene.
    pub fn validate(&self) -> Result<(), OpError> {
        fn id(name: &'static str, v: &str) -> Result<(), OpError> {
            if v.is_empty() {
                return Err(OpError::EmptyId(name));
            }
            if v.contains(ROW_KEY_SEPARATOR) {
                return Err(OpError::ReservedCharacter(v.to_owned()));
            }
            Ok(())
        }
        match self {
            RecordOp::RegisterStudent { student_id, .. } => id("studentId", student_id),
            RecordOp::RegisterCourse {
                course_id,
                term,
                owner_staff_id,
                ..
            } => {
                id("courseId", course_id)?;
                id("term", term)?;
                id("ownerStaffId", owner_staff_id)
            }
            RecordOp::RegisterAccount { subject_id, .. } => id("subjectId", subject_id),
            RecordOp::UpdateProfile {
                student_id, field, ..
            } => {
                id("studentId", student_id)?;
                if SELF_SERVICE_FIELDS.contains(&field.as_str())
                    || REGISTRAR_FIELDS.contains(&field.as_str())
                {
                    Ok(())
                } else {
                    Err(OpError::UnknownProfileField(field.clone()))
                }
            }
            RecordOp::UpsertGrade {
                student_id,
                course_id,
                term,
                score,
                ..
            } => {
                id("studentId", student_id)?;
                id("courseId", course_id)?;
                id("term", term)?;
                if *score > 100 {
                    return Err(OpError::ScoreOutOfRange(*score));
                }
                Ok(())
            }
            RecordOp::AttachFile {
                student_id,
                course_id,
                ..
            } => {
                id("studentId", student_id)?;
                id("courseId", course_id)
            }
            RecordOp::AuditRepair { table, .. } => table
                .parse::<Table>()
                .map(|_| ())
                .map_err(|_| OpError::UnknownTable(table.clone())),
        }
    }
}

impl Canonical for RecordOp {
    fn fields(&self) -> Fields {
        let f = Fields::new().with("kind", self.kind().as_str());
        match self {
            RecordOp::RegisterStudent {
                student_id,
                name,
                program,
            } => f
                .with("studentId", student_id.as_str())
                .with("name", name.as_str())
                .with("program", program.as_str()),
            RecordOp::RegisterCourse {
                course_id,
                title,
                term,
                owner_staff_id,
            } => f
                .with("courseId", course_id.as_str())
                .with("title", title.as_str())
                .with("term", term.as_str())
                .with("ownerStaffId", owner_staff_id.as_str()),
            RecordOp::RegisterAccount {
                public_key,
                role,
                subject_id,
                name,
            } => f
                .with("publicKey", crate::encoding::Value::Bytes(public_key.0.to_vec()))
                .with("role", role.as_str())
                .with("subjectId", subject_id.as_str())
                .with("name", name.as_str()),
            RecordOp::UpdateProfile {
                student_id,
                field,
                value,
            } => f
                .with("studentId", student_id.as_str())
                .with("field", field.as_str())
                .with("value", value.as_str()),
            RecordOp::UpsertGrade {
                student_id,
                course_id,
                term,
                score,
                letter,
            } => f
                .with("studentId", student_id.as_str())
                .with("courseId", course_id.as_str())
                .with("term", term.as_str())
                .with("score", *score)
                .with("letter", letter.as_str()),
            RecordOp::AttachFile {
                student_id,
                course_id,
                cid,
                media_label,
                size,
            } => f
                .with("studentId", student_id.as_str())
                .with("courseId", course_id.as_str())
                .with("cid", crate::encoding::Value::Bytes(cid.0.to_vec()))
                .with("mediaLabel", media_label.as_str())
                .with("size", *size),
            RecordOp::AuditRepair {
                table,
                row_key,
                field,
                old_value,
                new_value,
                audit_id,
            } => f
                .with("table", table.as_str())
                .with("rowKey", row_key.as_str())
                .with("field", field.as_str())
                .with("oldValue", old_value.as_str())
                .with("newValue", new_value.as_str())
                .with("auditId", audit_id.as_str()),
        }
    }
}

/// A signed record operation. `sender_key` travels with the transaction so
/// any node can check the signature before consulting its key registry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Transaction {
    pub sender: AccountId,
    pub sender_key: PublicKey,
    pub nonce: u64,
    pub op: RecordOp,
    pub timestamp: u64,
    pub signature: Signature,
}

impl Transaction {
    pub fn signed(key: &KeyPair, nonce: u64, op: RecordOp, timestamp: u64) -> Transaction {
        let sender_key = key.public();
        let bytes = signing_bytes(&sender_key.account_id(), &sender_key, nonce, &op, timestamp);
        Transaction {
            sender: sender_key.account_id(),
            sender_key,
            nonce,
            op,
            timestamp,
            signature: key.sign(&bytes),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        signing_bytes(
            &self.sender,
            &self.sender_key,
            self.nonce,
            &self.op,
            self.timestamp,
        )
    }

    /// Signature valid and the sender id matches the embedded key.
    pub fn signature_valid(&self) -> bool {
        self.sender == self.sender_key.account_id()
            && verifies(&self.sender_key, &self.signing_bytes(), &self.signature)
    }

    pub fn hash(&self) -> Hash256 {
        digest_sha256(&self.canonical_bytes())
    }
}

fn signing_bytes(
    sender: &AccountId,
    sender_key: &PublicKey,
    nonce: u64,
    op: &RecordOp,
    timestamp: u64,
) -> Vec<u8> {
    Fields::new()
        .with("sender", crate::encoding::Value::Bytes(sender.0 .0.to_vec()))
        .with("senderKey", crate::encoding::Value::Bytes(sender_key.0.to_vec()))
        .with("nonce", nonce)
        .with("op", op.fields())
        .with("timestamp", timestamp)
        .encode()
}

impl Canonical for Transaction {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("sender", crate::encoding::Value::Bytes(self.sender.0 .0.to_vec()))
            .with("senderKey", crate::encoding::Value::Bytes(self.sender_key.0.to_vec()))
            .with("nonce", self.nonce)
            .with("op", self.op.fields())
            .with("timestamp", self.timestamp)
            .with("signature", crate::encoding::Value::Bytes(self.signature.0.to_vec()))
    }
}
