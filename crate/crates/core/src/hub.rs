//! Hub node: a read-only replica of the university's private chain that also
//! holds a consortium membership. It turns final-state rows into credential
//! field maps, publishes their digests, and answers transfer requests.
//!
//! A transcript credential is a flat map of scalars:
//!
//! ```text
//! credentialType  "Transcript"
//! issuer          issuing organization name
//! studentId, name, period
//! course.<courseId>.score   integer
//! course.<courseId>.letter
//! course.<courseId>.title
//! ```
//!
//! A diploma credential carries `credentialType` "Diploma", `issuer`,
//! `studentId`, `name`, `program` and `period` (the award period taken from
//! `degreeAwarded`). The commitment digest is SHA-256 of the canonical
//! encoding of the map, so a verifier can recompute it from the JSON form.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{CryptoRng, RngCore};

use crate::chain::PrivateNode;
use crate::consortium::{
    AppendOutcome, BoxKeyPair, CommitmentRecord, ConsortiumEntry, CredentialType, MemberId,
    MemberLog, OrderingError, OrderingService, Payload, Submission, TransferError, TransferRequest,
    TransferResponse,
};
use crate::crypto::KeyPair;
use crate::encoding::{Fields, Value};
use crate::hash::digest_sha256;
use crate::store::schema::{RowKey, Table};
use crate::store::FinalStateDb;

/// An academic period label `YYYY-Season`, ordered by year then season.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Period {
    pub year: u32,
    pub season: Season,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Fall,
}

impl Season {
    const NAMES: [(&'static str, Season); 4] = [
        ("Winter", Season::Winter),
        ("Spring", Season::Spring),
        ("Summer", Season::Summer),
        ("Fall", Season::Fall),
    ];
}

impl FromStr for Period {
    type Err = HubError;
    fn from_str(s: &str) -> Result<Self, HubError> {
        let bad = || HubError::BadPeriod(s.to_owned());
        let (year, season) = s.split_once('-').ok_or_else(bad)?;
        if year.len() != 4 {
            return Err(bad());
        }
        let year = year.parse().map_err(|_| bad())?;
        let season = Season::NAMES
            .iter()
            .find(|(n, _)| *n == season)
            .map(|(_, s)| *s)
            .ok_or_else(bad)?;
        Ok(Period { year, season })
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Season::NAMES.iter().find(|(_, s)| *s == self.season).unwrap().0;
        write!(f, "{}-{}", self.year, name)
    }
}

impl PartialOrd for Period {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Period {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.year, self.season).cmp(&(other.year, other.season))
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum HubError {
    #[error("period `{0}` is not of the form YYYY-Season")]
    BadPeriod(String),
    #[error("period {0} already published")]
    AlreadyPublished(String),
    #[error(transparent)]
    Ordering(#[from] OrderingError),
    #[error("request is addressed to another home school")]
    WrongHomeSchool,
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("no grades for scope `{0}`")]
    ScopeUnavailable(String),
    #[error("requester is not a consortium member")]
    UnknownRequester,
    #[error(transparent)]
    Transfer(#[from] TransferError),
}

/// A credential field map and the commitment that binds it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Credential {
    pub fields: Fields,
    pub record: CommitmentRecord,
}

pub fn credential_digest(fields: &Fields) -> crate::hash::Hash256 {
    digest_sha256(&fields.encode())
}

/// Transcript fields for `student` restricted to `period`, and optionally one course.
/// `None` when the student is unknown or has no matching grades.
pub fn transcript_fields(
    db: &FinalStateDb,
    issuer_org: &str,
    student: &str,
    period: &str,
    course: Option<&str>,
) -> Option<Fields> {
    let row = db.row(Table::Students, &RowKey::single(student))?;
    let mut fields = Fields::new()
        .with("credentialType", CredentialType::Transcript.as_str())
        .with("issuer", issuer_org)
        .with("studentId", student)
        .with("name", row.get("name").cloned().unwrap_or(Value::Str(String::new())))
        .with("period", period);
    let mut any = false;
    for g in db.grade_rows_for(student) {
        let text = |f: &str| g.get(f).and_then(Value::as_str).unwrap_or_default().to_owned();
        let course_id = text("courseId");
        if text("term") != period || course.map_or(false, |c| c != course_id) {
            continue;
        }
        let title = db
            .row(Table::Courses, &RowKey::single(&course_id))
            .and_then(|c| c.get("title").cloned())
            .unwrap_or(Value::Str(String::new()));
        let prefix = format!("course.{course_id}");
        fields.insert(format!("{prefix}.score"), g.get("score").cloned().unwrap_or(Value::Int(0)));
        fields.insert(format!("{prefix}.letter"), text("letter"));
        fields.insert(format!("{prefix}.title"), title);
        any = true;
    }
    any.then_some(fields)
}

fn diploma_fields(issuer_org: &str, row: &Fields) -> Option<Fields> {
    let s = |f: &str| row.get(f).and_then(Value::as_str).unwrap_or_default();
    let awarded = s("degreeAwarded");
    if awarded.is_empty() {
        return None;
    }
    Some(
        Fields::new()
            .with("credentialType", CredentialType::Diploma.as_str())
            .with("issuer", issuer_org)
            .with("studentId", s("studentId"))
            .with("name", s("name"))
            .with("program", s("program"))
            .with("period", awarded),
    )
}

/// Every credential of `period` in `db`: one transcript per student with
/// grades in the period, plus diplomas awarded in it. Ordered by studentId,
/// transcripts before diplomas.
pub fn snapshot_credentials(db: &FinalStateDb, issuer: &MemberId, period: &str) -> Vec<Credential> {
    let mut out = Vec::new();
    for (key, row) in db.rows(Table::Students) {
        let student = &key.0[0];
        let mut found = Vec::new();
        if let Some(f) = transcript_fields(db, &issuer.org, student, period, None) {
            found.push((CredentialType::Transcript, f));
        }
        if let Some(f) = diploma_fields(&issuer.org, row).filter(|f| f.get("period") == Some(&Value::from(period))) {
            found.push((CredentialType::Diploma, f));
        }
        for (credential_type, fields) in found {
            out.push(Credential {
                record: CommitmentRecord {
                    subject_id: student.clone(),
                    credential_type,
                    period: period.to_owned(),
                    digest: credential_digest(&fields),
                    issuer: issuer.clone(),
                },
                fields,
            });
        }
    }
    out
}

/// Outcome of checking a credential field map against a consortium log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verification {
    Verified { issuer: MemberId, seq: u64 },
    NotFound,
}

/// Recomputes the digest of `fields` and looks for a matching commitment
/// whose subject, type, period and issuer agree with the map.
pub fn verify_credential(log: &MemberLog, fields: &Fields) -> Verification {
    let digest = credential_digest(fields);
    let s = |f: &str| fields.get(f).and_then(Value::as_str);
    for c in log.commitments_with_digest(&digest) {
        let agrees = s("studentId") == Some(&c.subject_id)
            && s("credentialType") == Some(c.credential_type.as_str())
            && s("period") == Some(&c.period)
            && s("issuer") == Some(&c.issuer.org);
        if agrees {
            if let Some(seq) = log.commitment_seq(&c.key()) {
                return Verification::Verified {
                    issuer: c.issuer.clone(),
                    seq,
                };
            }
        }
    }
    Verification::NotFound
}

/// Splits a transfer scope `period` or `period/courseId`.
fn parse_scope(scope: &str) -> (&str, Option<&str>) {
    match scope.split_once('/') {
        Some((p, c)) => (p, Some(c)),
        None => (scope, None),
    }
}

#[derive(Clone, Debug)]
pub struct HubNode {
    member: MemberId,
    signing: KeyPair,
    boxing: BoxKeyPair,
    replica: PrivateNode,
    log: MemberLog,
    last_published: Option<Period>,
    published: BTreeMap<String, Vec<Credential>>,
}

impl HubNode {
    /// `replica` is forced read-only.
    pub fn new(
        member: MemberId,
        signing: KeyPair,
        boxing: BoxKeyPair,
        replica: PrivateNode,
        log: MemberLog,
    ) -> Self {
        HubNode {
            member,
            signing,
            boxing,
            replica: replica.read_only(),
            log,
            last_published: None,
            published: BTreeMap::new(),
        }
    }

    pub fn member(&self) -> &MemberId {
        &self.member
    }

    pub fn replica(&self) -> &PrivateNode {
        &self.replica
    }

    pub fn replica_mut(&mut self) -> &mut PrivateNode {
        &mut self.replica
    }

    pub fn log(&self) -> &MemberLog {
        &self.log
    }

    pub fn last_published(&self) -> Option<&Period> {
        self.last_published.as_ref()
    }

    /// Credentials published per period, as read at publish time.
    pub fn published(&self) -> &BTreeMap<String, Vec<Credential>> {
        &self.published
    }

    pub fn deliver(&mut self, entry: ConsortiumEntry) -> AppendOutcome {
        self.log.member_validate_and_append(entry)
    }

    pub fn snapshot_credentials(&self, period: &str) -> Vec<Credential> {
        snapshot_credentials(self.replica.db(), &self.member, period)
    }

    /// Publishes `batch` for `period`. Periods must strictly increase. An empty
    /// batch closes the period without a log entry.
    pub fn publish_commitments(
        &mut self,
        ordering: &mut OrderingService,
        period: &str,
        batch: Vec<Credential>,
    ) -> Result<Option<ConsortiumEntry>, HubError> {
        let p: Period = period.parse()?;
        if self.last_published.as_ref().map_or(false, |last| p <= *last) {
            return Err(HubError::AlreadyPublished(period.to_owned()));
        }
        let entry = if batch.is_empty() {
            None
        } else {
            let records = batch.iter().map(|c| c.record.clone()).collect();
            let sub = Submission::sign(self.member.clone(), &self.signing, Payload::Commitments(records));
            Some(ordering.submit(sub)?)
        };
        self.last_published = Some(p);
        self.published.insert(period.to_owned(), batch);
        Ok(entry)
    }

    /// Snapshot then publish.
    pub fn close_period(
        &mut self,
        ordering: &mut OrderingService,
        period: &str,
    ) -> Result<Option<ConsortiumEntry>, HubError> {
        let batch = self.snapshot_credentials(period);
        self.publish_commitments(ordering, period, batch)
    }

    /// Opens a channel asking `home` for `subject`'s transcript over `scope`.
    pub fn request_transfer(
        &self,
        ordering: &mut OrderingService,
        channel_id: &str,
        home: &MemberId,
        subject: &str,
        scope: &str,
    ) -> Result<ConsortiumEntry, HubError> {
        let req = TransferRequest::new(
            channel_id,
            self.member.clone(),
            home.clone(),
            subject,
            scope,
            &self.signing,
        );
        let sub = Submission::sign(self.member.clone(), &self.signing, Payload::TransferRequest(req));
        Ok(ordering.submit(sub)?)
    }

    /// The canonical transcript bytes for a request. Their digest equals the
    /// published commitment whenever the scope is a whole period.
    pub fn transfer_payload(&self, req: &TransferRequest) -> Result<Vec<u8>, HubError> {
        if req.home_school != self.member {
            return Err(HubError::WrongHomeSchool);
        }
        let db = self.replica.db();
        if db.row(Table::Students, &RowKey::single(&req.subject_id)).is_none() {
            return Err(HubError::UnknownSubject(req.subject_id.clone()));
        }
        let (period, course) = parse_scope(&req.course_scope);
        let fields = transcript_fields(db, &self.member.org, &req.subject_id, period, course)
            .ok_or_else(|| HubError::ScopeUnavailable(req.course_scope.clone()))?;
        Ok(fields.encode())
    }

    /// Builds the sealed, signed response to `req`.
    pub fn handle_transfer_request<R: RngCore + CryptoRng>(
        &self,
        req: &TransferRequest,
        rng: &mut R,
    ) -> Result<TransferResponse, HubError> {
        let payload = self.transfer_payload(req)?;
        let requester = self
            .log
            .membership()
            .get(&req.host_school)
            .ok_or(HubError::UnknownRequester)?;
        Ok(TransferResponse::new(
            req.channel_id.clone(),
            &payload,
            &requester.box_key,
            &self.signing,
            rng,
        ))
    }

    /// Answers the accepted request on `channel_id` through the ordering service.
    pub fn service_transfer<R: RngCore + CryptoRng>(
        &self,
        ordering: &mut OrderingService,
        channel_id: &str,
        rng: &mut R,
    ) -> Result<ConsortiumEntry, HubError> {
        let ch = self
            .log
            .channel(channel_id)
            .ok_or(TransferError::UnknownChannel)?;
        let resp = self.handle_transfer_request(&ch.request, rng)?;
        self.log.check_response(&self.member, &resp)?;
        let sub = Submission::sign(self.member.clone(), &self.signing, Payload::TransferResponse(resp));
        Ok(ordering.submit(sub)?)
    }

    /// Opens and verifies the accepted response on `channel_id`.
    pub fn receive_transfer(&self, channel_id: &str) -> Result<Vec<u8>, TransferError> {
        self.log.receive_transfer(&self.member, channel_id, &self.boxing)
    }

    /// Verifies a response exactly as delivered, accepted by the log or not.
    pub fn receive_response(&self, resp: &TransferResponse) -> Result<Vec<u8>, TransferError> {
        self.log.receive_response(&self.member, resp, &self.boxing)
    }
}
