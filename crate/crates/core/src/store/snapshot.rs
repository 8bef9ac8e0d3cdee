//! Versioned text snapshot of a final-state database.
//!
//! ```text
//! educhain-state-snapshot v1
//! table <name> <rowCount>
//! <hex of canonical row encoding>        (rowCount lines, key order)
//! ...                                    (tables in fixed order)
//! oplog <entryCount>
//! <hex of canonical log entry encoding>  (entryCount lines, seq order)
//! end <md5 hex of every preceding byte>
//! ```
//!
//! Identical databases produce byte-identical snapshots.

use super::schema::{FieldType, Table};
use super::{FinalStateDb, OperationLogEntry};
use crate::crypto::AccountId;
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::{digest_md5, Hash256};

pub const SNAPSHOT_MAGIC: &str = "educhain-state-snapshot v1";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SnapshotError {
    #[error("not a v1 state snapshot")]
    BadMagic,
    #[error("line {0}: {1}")]
    Malformed(usize, String),
    #[error("trailer checksum mismatch")]
    ChecksumMismatch,
}

pub fn write_snapshot(db: &FinalStateDb) -> String {
    let mut out = String::new();
    out.push_str(SNAPSHOT_MAGIC);
    out.push('\n');
    for table in Table::ALL {
        out.push_str(&format!("table {} {}\n", table.name(), db.row_count(table)));
        for row in db.rows(table).values() {
            out.push_str(&hex::encode(row.encode()));
            out.push('\n');
        }
    }
    out.push_str(&format!("oplog {}\n", db.op_log().len()));
    for e in db.op_log() {
        out.push_str(&hex::encode(e.canonical_bytes()));
        out.push('\n');
    }
    let sum = digest_md5(out.as_bytes());
    out.push_str(&format!("end {}\n", sum.to_hex()));
    out
}

pub fn read_snapshot(text: &str) -> Result<FinalStateDb, SnapshotError> {
    let body_end = text
        .rfind("end ")
        .ok_or_else(|| SnapshotError::Malformed(0, "missing trailer".into()))?;
    let (body, trailer) = text.split_at(body_end);
    let expected = trailer.trim_end().strip_prefix("end ").unwrap_or_default();
    if digest_md5(body.as_bytes()).to_hex() != expected {
        return Err(SnapshotError::ChecksumMismatch);
    }
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == SNAPSHOT_MAGIC => {}
        _ => return Err(SnapshotError::BadMagic),
    }
    let mut db = FinalStateDb::new();
    let bad = |n: usize, m: &str| SnapshotError::Malformed(n + 1, m.to_owned());
    for table in Table::ALL {
        let (n, header) = lines.next().ok_or_else(|| bad(0, "truncated"))?;
        let count = header
            .strip_prefix(&format!("table {} ", table.name()))
            .and_then(|c| c.parse::<usize>().ok())
            .ok_or_else(|| bad(n, "expected table header"))?;
        let schema = table.schema();
        for _ in 0..count {
            let (n, line) = lines.next().ok_or_else(|| bad(n, "truncated table"))?;
            let bytes = hex::decode(line).map_err(|_| bad(n, "bad hex"))?;
            let raw = Fields::decode_raw(&bytes).map_err(|e| bad(n, &e.to_string()))?;
            let mut row = Fields::new();
            for (name, value) in raw {
                let text = String::from_utf8(value).map_err(|_| bad(n, "non-utf8 value"))?;
                let v = match schema.field_type(&name) {
                    Some(FieldType::Str) => Value::Str(text),
                    Some(FieldType::Int) => {
                        Value::Int(text.parse().map_err(|_| bad(n, "bad integer"))?)
                    }
                    None => return Err(bad(n, "unknown field")),
                };
                row.insert(name, v);
            }
            if !schema.conforms(&row) {
                return Err(bad(n, "row does not match schema"));
            }
            let key = schema.key_of(&row);
            db.tables[table.index()].insert(key, row);
        }
    }
    let (n, header) = lines.next().ok_or_else(|| bad(0, "missing oplog"))?;
    let count = header
        .strip_prefix("oplog ")
        .and_then(|c| c.parse::<usize>().ok())
        .ok_or_else(|| bad(n, "expected oplog header"))?;
    for _ in 0..count {
        let (n, line) = lines.next().ok_or_else(|| bad(n, "truncated oplog"))?;
        let bytes = hex::decode(line).map_err(|_| bad(n, "bad hex"))?;
        let raw = Fields::decode_raw(&bytes).map_err(|e| bad(n, &e.to_string()))?;
        db.op_log.push(decode_entry(raw).ok_or_else(|| bad(n, "bad log entry"))?);
    }
    if lines.next().is_some() {
        return Err(bad(0, "trailing data"));
    }
    Ok(db)
}

fn decode_entry(raw: Vec<(String, Vec<u8>)>) -> Option<OperationLogEntry> {
    let get = |name: &str| raw.iter().find(|(n, _)| n == name).map(|(_, v)| v.clone());
    let num = |name: &str| -> Option<u64> { String::from_utf8(get(name)?).ok()?.parse().ok() };
    Some(OperationLogEntry {
        seq: num("seq")?,
        actor: AccountId(Hash256::from_slice(&get("actor")?)?),
        op_kind: String::from_utf8(get("opKind")?).ok()?,
        start_time: num("startTime")?,
        block_number: num("blockNumber")?,
        tx_hash: Hash256::from_slice(&get("txHash")?)?,
        failure: match get("failure") {
            Some(v) => Some(String::from_utf8(v).ok()?),
            None => None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::events::ChainEvent;
    use crate::crypto::KeyPair;
    use crate::record::{RecordOp, Role};

    fn sample() -> FinalStateDb {
        let mut db = FinalStateDb::new();
        let ops = vec![
            RecordOp::RegisterAccount {
                public_key: KeyPair::from_seed([2; 32]).public(),
                role: Role::Staff,
                subject_id: "T1".into(),
                name: "Dr T".into(),
            },
            RecordOp::RegisterStudent {
                student_id: "S1".into(),
                name: "Alice".into(),
                program: "CS".into(),
            },
            RecordOp::RegisterCourse {
                course_id: "CS101".into(),
                title: "Intro".into(),
                term: "2023-Fall".into(),
                owner_staff_id: "T1".into(),
            },
            RecordOp::UpsertGrade {
                student_id: "S1".into(),
                course_id: "CS101".into(),
                term: "2023-Fall".into(),
                score: 88,
                letter: "B+".into(),
            },
            RecordOp::UpsertGrade {
                student_id: "S2".into(),
                course_id: "CS101".into(),
                term: "2023-Fall".into(),
                score: 88,
                letter: "B+".into(),
            },
        ];
        for (i, op) in ops.into_iter().enumerate() {
            let _ = db.apply_event(&ChainEvent {
                block_height: i as u64,
                tx_hash: Hash256([i as u8; 32]),
                op,
                actor: AccountId::default(),
                timestamp: 5,
            });
        }
        db
    }

    #[test]
    fn snapshot_round_trip_is_byte_stable() {
        let db = sample();
        let text = write_snapshot(&db);
        assert!(text.starts_with(SNAPSHOT_MAGIC));
        let back = read_snapshot(&text).unwrap();
        assert_eq!(back, db);
        assert_eq!(write_snapshot(&back), text);
        for t in Table::ALL {
            assert_eq!(back.table_digest(t), db.table_digest(t));
        }
    }

    #[test]
    fn corrupted_snapshot_rejected() {
        let text = write_snapshot(&sample());
        let corrupted = text.replacen("table grades 1", "table grades 2", 1);
        assert_eq!(read_snapshot(&corrupted), Err(SnapshotError::ChecksumMismatch));
        assert!(read_snapshot("garbage").is_err());
    }
}
