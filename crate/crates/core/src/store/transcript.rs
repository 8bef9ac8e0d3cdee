use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{FinalStateDb, LogContext, RowKey, StoreError, Table};
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::{digest_sha256, Hash256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranscriptRow {
    pub course_id: String,
    pub title: String,
    pub term: String,
    pub score: u8,
    pub letter: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranscriptDoc {
    pub student_id: String,
    pub student_name: String,
    /// Sorted by (term, courseId).
    pub rows: Vec<TranscriptRow>,
    pub issued_at: u64,
    pub digest: Hash256,
}

impl TranscriptRow {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("courseId", self.course_id.as_str())
            .with("title", self.title.as_str())
            .with("term", self.term.as_str())
            .with("score", self.score)
            .with("letter", self.letter.as_str())
    }
}

impl TranscriptDoc {
    /// Canonical fields excluding the digest itself.
    fn body_fields(&self) -> Fields {
        Fields::new()
            .with("studentId", self.student_id.as_str())
            .with("studentName", self.student_name.as_str())
            .with(
                "rows",
                Value::List(self.rows.iter().map(|r| Value::Map(r.fields())).collect()),
            )
            .with("issuedAt", self.issued_at)
    }

    pub fn compute_digest(&self) -> Hash256 {
        digest_sha256(&self.body_fields().encode())
    }

    pub fn digest_valid(&self) -> bool {
        self.digest == self.compute_digest()
    }
}

impl Canonical for TranscriptDoc {
    fn fields(&self) -> Fields {
        self.body_fields()
            .with("digest", Value::Bytes(self.digest.0.to_vec()))
    }
}

impl FinalStateDb {
    /// Latest-term grade row of a student for each course they have a grade in.
    pub fn grade_rows_for(&self, student_id: &str) -> Vec<&Fields> {
        self.rows(Table::Grades)
            .iter()
            .filter(|(k, _)| k.0.first().map(String::as_str) == Some(student_id))
            .map(|(_, r)| r)
            .collect()
    }

    /// Builds a transcript for the selected courses and logs the export.
    pub fn export_transcript(
        &mut self,
        student_id: &str,
        course_ids: &BTreeSet<String>,
        ctx: LogContext,
    ) -> Result<TranscriptDoc, StoreError> {
        let student = self
            .row(Table::Students, &RowKey::single(student_id))
            .ok_or_else(|| StoreError::UnknownStudent(student_id.to_owned()))?;
        let student_name = student.get("name").map(Value::render).unwrap_or_default();
        let mut rows = Vec::new();
        for course_id in course_ids {
            // latest term wins when a course was retaken
            let grade = self
                .grade_rows_for(student_id)
                .into_iter()
                .filter(|r| r.get("courseId").map(Value::render).as_deref() == Some(course_id))
                .last()
                .ok_or_else(|| StoreError::MissingGrade(course_id.clone()))?;
            let title = self
                .row(Table::Courses, &RowKey::single(course_id))
                .and_then(|c| c.get("title"))
                .map(Value::render)
                .unwrap_or_default();
            rows.push(TranscriptRow {
                course_id: course_id.clone(),
                title,
                term: grade.get("term").map(Value::render).unwrap_or_default(),
                score: grade.get("score").and_then(Value::as_int).unwrap_or(0) as u8,
                letter: grade.get("letter").map(Value::render).unwrap_or_default(),
            });
        }
        rows.sort_by(|a, b| (&a.term, &a.course_id).cmp(&(&b.term, &b.course_id)));
        let mut doc = TranscriptDoc {
            student_id: student_id.to_owned(),
            student_name,
            rows,
            issued_at: ctx.time,
            digest: Hash256::ZERO,
        };
        doc.digest = doc.compute_digest();
        self.log_local("ExportTranscript", ctx, doc.digest);
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::events::ChainEvent;
    use crate::crypto::{AccountId, KeyPair};
    use crate::record::{RecordOp, Role};

    fn apply(db: &mut FinalStateDb, op: RecordOp) {
        db.apply_event(&ChainEvent {
            block_height: 1,
            tx_hash: Hash256::ZERO,
            op,
            actor: AccountId::default(),
            timestamp: 1,
        })
        .unwrap();
    }

    fn setup() -> FinalStateDb {
        let mut db = FinalStateDb::new();
        apply(
            &mut db,
            RecordOp::RegisterAccount {
                public_key: KeyPair::from_seed([2; 32]).public(),
                role: Role::Staff,
                subject_id: "T1".into(),
                name: "Dr T".into(),
            },
        );
        apply(
            &mut db,
            RecordOp::RegisterStudent {
                student_id: "S1".into(),
                name: "Alice".into(),
                program: "CS".into(),
            },
        );
        for (c, term, score) in [("CS101", "2023-Fall", 91u8), ("MA201", "2023-Spring", 78), ("PH110", "2023-Fall", 85), ("CS999", "2024-Spring", 60)] {
            apply(
                &mut db,
                RecordOp::RegisterCourse {
                    course_id: c.into(),
                    title: format!("Title {c}"),
                    term: term.into(),
                    owner_staff_id: "T1".into(),
                },
            );
            if c != "CS999" {
                apply(
                    &mut db,
                    RecordOp::UpsertGrade {
                        student_id: "S1".into(),
                        course_id: c.into(),
                        term: term.into(),
                        score,
                        letter: "A".into(),
                    },
                );
            }
        }
        db
    }

    fn ctx(time: u64) -> LogContext {
        LogContext {
            actor: AccountId::default(),
            time,
            block_number: 4,
        }
    }

    fn sel(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn export_selected_courses_sorted() {
        let mut db = setup();
        let doc = db
            .export_transcript("S1", &sel(&["CS101", "MA201", "PH110"]), ctx(100))
            .unwrap();
        assert_eq!(doc.rows.len(), 3);
        let order: Vec<&str> = doc.rows.iter().map(|r| r.course_id.as_str()).collect();
        // "2023-Fall" sorts before "2023-Spring" as plain text
        assert_eq!(order, vec!["CS101", "PH110", "MA201"]);
        assert!(doc.digest_valid());
        assert_eq!(db.op_log().last().unwrap().op_kind, "ExportTranscript");
        assert_eq!(db.op_log().last().unwrap().tx_hash, doc.digest);
    }

    #[test]
    fn export_errors() {
        let mut db = setup();
        assert_eq!(
            db.export_transcript("S1", &sel(&["CS101", "CS999"]), ctx(1)),
            Err(StoreError::MissingGrade("CS999".into()))
        );
        assert_eq!(
            db.export_transcript("S404", &sel(&["CS101"]), ctx(1)),
            Err(StoreError::UnknownStudent("S404".into()))
        );
    }

    #[test]
    fn export_is_deterministic_under_fixed_clock() {
        let mut db = setup();
        let a = db.export_transcript("S1", &sel(&["CS101", "MA201"]), ctx(7)).unwrap();
        let b = db.export_transcript("S1", &sel(&["CS101", "MA201"]), ctx(7)).unwrap();
        assert_eq!(a.canonical_bytes(), b.canonical_bytes());
        let mut tampered = a.clone();
        tampered.rows[0].score += 1;
        assert!(!tampered.digest_valid());
    }
}
