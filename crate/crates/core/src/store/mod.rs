//! Per-node final-state database, derived purely from chain events.
//!
//! Rows are stored as canonical field maps under their primary key. The
//! database is a cache of the chain: [`FinalStateDb::apply_event`] is the
//! only regular mutation path; [`FinalStateDb::tamper_set_field`] exists for
//! fault injection and [`FinalStateDb::apply_fix`] for audit repairs.

pub mod checksum;
pub mod content;
pub mod schema;
pub mod snapshot;
pub mod transcript;

use std::collections::BTreeMap;
use std::ops::Bound;

use serde::{Deserialize, Serialize};

use crate::chain::events::ChainEvent;
use crate::crypto::AccountId;
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::Hash256;
use crate::record::{RecordOp, Role};

pub use checksum::TableChecksum;
pub use content::ContentStore;
pub use schema::{RowKey, Table, TableSchema};
pub use transcript::TranscriptDoc;

/// Field name used by whole-row repairs.
pub const WHOLE_ROW: &str = "*";

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemaViolation {
    #[error("unknown student `{0}`")]
    UnknownStudent(String),
    #[error("unknown course `{0}`")]
    UnknownCourse(String),
    #[error("unknown staff member `{0}`")]
    UnknownStaff(String),
    #[error("{table} row `{key}` already exists")]
    Duplicate { table: Table, key: String },
    #[error("{table} has no row `{key}`")]
    UnknownRow { table: Table, key: String },
    #[error("no grade row for student `{student}` in course `{course}`")]
    NoGradeRow { student: String, course: String },
    #[error("field `{field}` is not writable in {table}")]
    BadField { table: Table, field: String },
    #[error("value `{value}` does not fit field `{field}`")]
    BadValue { field: String, value: String },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown field `{field}` in {table}")]
    UnknownField { table: Table, field: String },
    #[error("chunk size must be at least 1")]
    BadChunkSize,
    #[error("unknown student `{0}`")]
    UnknownStudent(String),
    #[error("no grade for course `{0}`")]
    MissingGrade(String),
    #[error(transparent)]
    Schema(#[from] SchemaViolation),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChangeKind {
    Inserted,
    Updated,
    Deleted,
    Unchanged,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowChange {
    pub table: Table,
    pub key: RowKey,
    pub change: ChangeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct OperationLogEntry {
    pub seq: u64,
    pub actor: AccountId,
    pub op_kind: String,
    pub start_time: u64,
    pub block_number: u64,
    pub tx_hash: Hash256,
    /// `None` on success, otherwise the reason the event mutated nothing.
    pub failure: Option<String>,
}

impl Canonical for OperationLogEntry {
    fn fields(&self) -> Fields {
        let f = Fields::new()
            .with("seq", self.seq)
            .with("actor", Value::Bytes(self.actor.0 .0.to_vec()))
            .with("opKind", self.op_kind.as_str())
            .with("startTime", self.start_time)
            .with("blockNumber", self.block_number)
            .with("txHash", Value::Bytes(self.tx_hash.0.to_vec()));
        match &self.failure {
            Some(reason) => f.with("failure", reason.as_str()),
            None => f,
        }
    }
}

/// Who performed a non-chain operation (exports), and when.
#[derive(Clone, Copy, Debug)]
pub struct LogContext {
    pub actor: AccountId,
    pub time: u64,
    pub block_number: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FinalStateDb {
    tables: [BTreeMap<RowKey, Fields>; 5],
    op_log: Vec<OperationLogEntry>,
}

impl FinalStateDb {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rows(&self, table: Table) -> &BTreeMap<RowKey, Fields> {
        &self.tables[table.index()]
    }

    fn rows_mut(&mut self, table: Table) -> &mut BTreeMap<RowKey, Fields> {
        &mut self.tables[table.index()]
    }

    pub fn row(&self, table: Table, key: &RowKey) -> Option<&Fields> {
        self.rows(table).get(key)
    }

    pub fn row_count(&self, table: Table) -> usize {
        self.rows(table).len()
    }

    pub fn op_log(&self) -> &[OperationLogEntry] {
        &self.op_log
    }

    /// Applies one chain event and records it in the operation log.
    pub fn apply_event(&mut self, ev: &ChainEvent) -> Result<Vec<RowChange>, SchemaViolation> {
        let result = self.apply_op(&ev.op);
        self.log(
            ev.actor,
            ev.op.kind().as_str(),
            ev.timestamp,
            ev.block_height,
            ev.tx_hash,
            result.as_ref().err().map(ToString::to_string),
        );
        result
    }

    /// Applies an event without logging it. Used when rebuilding after a rollback.
    pub(crate) fn apply_silently(&mut self, ev: &ChainEvent) {
        let _ = self.apply_op(&ev.op);
    }

    /// Clears all tables, keeps the operation log and records the rollback.
    pub(crate) fn reset_for_rollback(&mut self, height: u64, time: u64) {
        for t in &mut self.tables {
            t.clear();
        }
        self.log(
            AccountId::default(),
            "Rollback",
            time,
            height,
            Hash256::ZERO,
            None,
        );
    }

    fn log(
        &mut self,
        actor: AccountId,
        kind: &str,
        time: u64,
        block: u64,
        tx_hash: Hash256,
        failure: Option<String>,
    ) {
        let seq = self.op_log.len() as u64;
        self.op_log.push(OperationLogEntry {
            seq,
            actor,
            op_kind: kind.to_owned(),
            start_time: time,
            block_number: block,
            tx_hash,
            failure,
        });
    }

    fn apply_op(&mut self, op: &RecordOp) -> Result<Vec<RowChange>, SchemaViolation> {
        match op {
            RecordOp::RegisterStudent {
                student_id,
                name,
                program,
            } => {
                let row = Fields::new()
                    .with("studentId", student_id.as_str())
                    .with("name", name.as_str())
                    .with("program", program.as_str());
                self.insert_new(Table::Students, row).map(|c| vec![c])
            }
            RecordOp::RegisterCourse {
                course_id,
                title,
                term,
                owner_staff_id,
            } => {
                let staff_key = RowKey::single(owner_staff_id);
                if !self.rows(Table::Staff).contains_key(&staff_key) {
                    return Err(SchemaViolation::UnknownStaff(owner_staff_id.clone()));
                }
                let row = Fields::new()
                    .with("courseId", course_id.as_str())
                    .with("title", title.as_str())
                    .with("term", term.as_str())
                    .with("ownerStaffId", owner_staff_id.as_str());
                let inserted = self.insert_new(Table::Courses, row)?;
                let staff = self.rows_mut(Table::Staff).get_mut(&staff_key).unwrap();
                let mut owned: Vec<String> = staff
                    .get("courses")
                    .and_then(Value::as_str)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.split(',').map(str::to_owned).collect())
                    .unwrap_or_default();
                owned.push(course_id.clone());
                owned.sort();
                staff.insert("courses", owned.join(","));
                Ok(vec![
                    inserted,
                    RowChange {
                        table: Table::Staff,
                        key: staff_key,
                        change: ChangeKind::Updated,
                    },
                ])
            }
            RecordOp::RegisterAccount {
                role,
                subject_id,
                name,
                ..
            } => {
                if *role != Role::Staff {
                    return Ok(Vec::new());
                }
                let key = RowKey::single(subject_id);
                if self.rows(Table::Staff).contains_key(&key) {
                    return Ok(vec![RowChange {
                        table: Table::Staff,
                        key,
                        change: ChangeKind::Unchanged,
                    }]);
                }
                let row = Fields::new()
                    .with("staffId", subject_id.as_str())
                    .with("name", name.as_str());
                self.insert_new(Table::Staff, row).map(|c| vec![c])
            }
            RecordOp::UpdateProfile {
                student_id,
                field,
                value,
            } => {
                let key = RowKey::single(student_id);
                if !self.rows(Table::Students).contains_key(&key) {
                    return Err(SchemaViolation::UnknownStudent(student_id.clone()));
                }
                self.set_field(Table::Students, &key, field, value)
                    .map(|c| vec![c])
            }
            RecordOp::UpsertGrade {
                student_id,
                course_id,
                term,
                score,
                letter,
            } => {
                if !self
                    .rows(Table::Students)
                    .contains_key(&RowKey::single(student_id))
                {
                    return Err(SchemaViolation::UnknownStudent(student_id.clone()));
                }
                if !self
                    .rows(Table::Courses)
                    .contains_key(&RowKey::single(course_id))
                {
                    return Err(SchemaViolation::UnknownCourse(course_id.clone()));
                }
                let key = RowKey::new([student_id.as_str(), course_id, term]);
                let attachment = self
                    .row(Table::Grades, &key)
                    .and_then(|r| r.get("attachmentCid").cloned())
                    .unwrap_or(Value::Str(String::new()));
                let row = Fields::new()
                    .with("studentId", student_id.as_str())
                    .with("courseId", course_id.as_str())
                    .with("term", term.as_str())
                    .with("score", *score)
                    .with("letter", letter.as_str())
                    .with("attachmentCid", attachment);
                Ok(vec![self.upsert(Table::Grades, row)])
            }
            RecordOp::AttachFile {
                student_id,
                course_id,
                cid,
                media_label,
                size,
            } => {
                let grade_key = self
                    .latest_grade_key(student_id, course_id)
                    .ok_or_else(|| SchemaViolation::NoGradeRow {
                        student: student_id.clone(),
                        course: course_id.clone(),
                    })?;
                let att = Fields::new()
                    .with("cid", cid.to_hex())
                    .with("size", *size)
                    .with("mediaLabel", media_label.as_str());
                let a = self.upsert(Table::Attachments, att);
                let g = self.set_field(Table::Grades, &grade_key, "attachmentCid", &cid.to_hex())?;
                Ok(vec![a, g])
            }
            RecordOp::AuditRepair {
                table,
                row_key,
                field,
                old_value,
                new_value,
                ..
            } => {
                let table: Table = table
                    .parse()
                    .map_err(|_| SchemaViolation::BadField {
                        table: Table::Students,
                        field: table.clone(),
                    })?;
                let key = RowKey::parse(row_key);
                // compare-and-set: a repair never overwrites a later change
                if self.current_value(table, &key, field) != *old_value {
                    return Ok(vec![RowChange {
                        table,
                        key,
                        change: ChangeKind::Unchanged,
                    }]);
                }
                self.apply_fix(table, &key, field, new_value).map(|c| vec![c])
            }
        }
    }

    fn latest_grade_key(&self, student: &str, course: &str) -> Option<RowKey> {
        let lo = RowKey::new([student, course]);
        self.rows(Table::Grades)
            .range((Bound::Excluded(lo), Bound::Unbounded))
            .take_while(|(k, _)| k.0.len() == 3 && k.0[0] == student && k.0[1] == course)
            .map(|(k, _)| k.clone())
            .last()
    }

    fn insert_new(&mut self, table: Table, row: Fields) -> Result<RowChange, SchemaViolation> {
        let schema = table.schema();
        let row = schema.complete(row);
        let key = schema.key_of(&row);
        if self.rows(table).contains_key(&key) {
            return Err(SchemaViolation::Duplicate {
                table,
                key: key.render(),
            });
        }
        self.rows_mut(table).insert(key.clone(), row);
        Ok(RowChange {
            table,
            key,
            change: ChangeKind::Inserted,
        })
    }

    pub(crate) fn upsert(&mut self, table: Table, row: Fields) -> RowChange {
        let schema = table.schema();
        let row = schema.complete(row);
        let key = schema.key_of(&row);
        let change = match self.rows_mut(table).insert(key.clone(), row.clone()) {
            None => ChangeKind::Inserted,
            Some(old) if old == row => ChangeKind::Unchanged,
            Some(_) => ChangeKind::Updated,
        };
        RowChange { table, key, change }
    }

    fn set_field(
        &mut self,
        table: Table,
        key: &RowKey,
        field: &str,
        text: &str,
    ) -> Result<RowChange, SchemaViolation> {
        let schema = table.schema();
        if schema.is_key_field(field) || schema.field_type(field).is_none() {
            return Err(SchemaViolation::BadField {
                table,
                field: field.to_owned(),
            });
        }
        let value = schema
            .parse_value(field, text)
            .ok_or_else(|| SchemaViolation::BadValue {
                field: field.to_owned(),
                value: text.to_owned(),
            })?;
        let row = self
            .rows_mut(table)
            .get_mut(key)
            .ok_or_else(|| SchemaViolation::UnknownRow {
                table,
                key: key.render(),
            })?;
        let change = if row.get(field) == Some(&value) {
            ChangeKind::Unchanged
        } else {
            ChangeKind::Updated
        };
        row.insert(field, value);
        Ok(RowChange {
            table,
            key: key.clone(),
            change,
        })
    }

    /// Direct write used by audit repair and by replayed `AuditRepair` events.
    ///
    /// `field == "*"` replaces the whole row: an empty value deletes it,
    /// otherwise the value is the row as a JSON object.
    pub fn apply_fix(
        &mut self,
        table: Table,
        key: &RowKey,
        field: &str,
        new_value: &str,
    ) -> Result<RowChange, SchemaViolation> {
        if field != WHOLE_ROW {
            return self.set_field(table, key, field, new_value);
        }
        if new_value.is_empty() {
            let change = match self.rows_mut(table).remove(key) {
                Some(_) => ChangeKind::Deleted,
                None => ChangeKind::Unchanged,
            };
            return Ok(RowChange {
                table,
                key: key.clone(),
                change,
            });
        }
        let row = row_from_json(table, new_value).ok_or_else(|| SchemaViolation::BadValue {
            field: WHOLE_ROW.to_owned(),
            value: new_value.to_owned(),
        })?;
        if &table.schema().key_of(&row) != key {
            return Err(SchemaViolation::BadValue {
                field: WHOLE_ROW.to_owned(),
                value: new_value.to_owned(),
            });
        }
        Ok(self.upsert(table, row))
    }

    /// Text of `field` in the row at `key` as repairs see it: the rendered value,
    /// the row as JSON for `*`, and the empty string when the row is absent.
    pub fn current_value(&self, table: Table, key: &RowKey, field: &str) -> String {
        match self.row(table, key) {
            None => String::new(),
            Some(row) if field == WHOLE_ROW => row_to_json(row),
            Some(row) => row.get(field).map(Value::render).unwrap_or_default(),
        }
    }

    /// Writes a field directly, bypassing event application. Fault injection only.
    pub fn tamper_set_field(
        &mut self,
        table: Table,
        key: &RowKey,
        field: &str,
        value: &str,
    ) -> Result<RowChange, SchemaViolation> {
        self.set_field(table, key, field, value)
    }

    /// Deletes a row directly. Fault injection only.
    pub fn tamper_delete_row(&mut self, table: Table, key: &RowKey) -> bool {
        self.rows_mut(table).remove(key).is_some()
    }

    /// Rows matching an equality conjunction, in primary-key order.
    pub fn query(&self, table: &str, predicate: &[(&str, &str)]) -> Result<Vec<Fields>, StoreError> {
        let table: Table = table
            .parse()
            .map_err(|_| StoreError::UnknownTable(table.to_owned()))?;
        let schema = table.schema();
        for (field, _) in predicate {
            if schema.field_type(field).is_none() {
                return Err(StoreError::UnknownField {
                    table,
                    field: (*field).to_owned(),
                });
            }
        }
        Ok(self
            .rows(table)
            .values()
            .filter(|row| {
                predicate
                    .iter()
                    .all(|(f, v)| row.get(f).map(|x| x.render() == *v).unwrap_or(false))
            })
            .cloned()
            .collect())
    }

    /// Appends a log entry for an operation that did not come from the chain.
    pub fn log_local(&mut self, kind: &str, ctx: LogContext, reference: Hash256) {
        self.log(ctx.actor, kind, ctx.time, ctx.block_number, reference, None);
    }
}

/// Parses a whole-row repair value.
pub fn row_from_json(table: Table, text: &str) -> Option<Fields> {
    let json: serde_json::Value = serde_json::from_str(text).ok()?;
    let scalars = Fields::from_json_scalars(&json).ok()?;
    let schema = table.schema();
    let mut row = Fields::new();
    for (name, value) in scalars.iter() {
        let typed = schema.parse_value(name, &value.render())?;
        row.insert(name.clone(), typed);
    }
    schema.conforms(&row).then_some(row)
}

/// Renders a row as the JSON text used by whole-row repairs.
pub fn row_to_json(row: &Fields) -> String {
    row.to_json().to_string()
}
