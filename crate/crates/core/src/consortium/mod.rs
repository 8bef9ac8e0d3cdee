//! Inter-university consortium log.
//!
//! A single [`OrderingService`] assigns dense sequence numbers to signed
//! member submissions and countersigns them. Every member keeps a
//! [`MemberLog`] and validates each delivered entry independently; valid
//! entries join the member's accepted view, invalid ones are flagged and
//! excluded. Fault-free members therefore hold byte-equal accepted logs.

pub mod transfer;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::crypto::{verifies, AccountId, KeyPair, PublicKey, Signature};
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::{digest_md5, Hash256};

pub use transfer::{
    open_payload, seal_payload, BoxKeyPair, BoxPublicKey, IntegrityCheck, TransferError,
    TransferRequest, TransferResponse,
};

/// Organization name plus the account id of its consortium signing key.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MemberId {
    pub org: String,
    pub account: AccountId,
}

impl MemberId {
    pub fn new(org: impl Into<String>, key: &PublicKey) -> Self {
        MemberId {
            org: org.into(),
            account: key.account_id(),
        }
    }
}

impl fmt::Display for MemberId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.org, self.account.short())
    }
}

impl Canonical for MemberId {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("org", self.org.as_str())
            .with("account", Value::Bytes(self.account.0 .0.to_vec()))
    }
}

/// A registered consortium member: signing key and sealed-box key.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Member {
    pub id: MemberId,
    pub signing_key: PublicKey,
    pub box_key: BoxPublicKey,
}

/// The fixed membership list every participant is configured with.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Membership(BTreeMap<AccountId, Member>);

impl Membership {
    pub fn new(members: impl IntoIterator<Item = Member>) -> Self {
        Membership(members.into_iter().map(|m| (m.id.account, m)).collect())
    }

    /// The member whose id matches exactly (org and account).
    pub fn get(&self, id: &MemberId) -> Option<&Member> {
        self.0.get(&id.account).filter(|m| m.id == *id)
    }

    pub fn by_org(&self, org: &str) -> Option<&Member> {
        self.0.values().find(|m| m.id.org == org)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Member> {
        self.0.values()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CredentialType {
    Transcript,
    Diploma,
}

impl CredentialType {
    pub fn as_str(&self) -> &'static str {
        match self {
            CredentialType::Transcript => "Transcript",
            CredentialType::Diploma => "Diploma",
        }
    }
}

impl fmt::Display for CredentialType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CredentialType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Transcript" => Ok(CredentialType::Transcript),
            "Diploma" => Ok(CredentialType::Diploma),
            _ => Err(format!("unknown credential type `{s}`")),
        }
    }
}

/// Published digest of one credential.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CommitmentRecord {
    pub subject_id: String,
    pub credential_type: CredentialType,
    pub period: String,
    pub digest: Hash256,
    pub issuer: MemberId,
}

/// Uniqueness key of a commitment within a log.
pub type CommitmentKey = (String, CredentialType, String, MemberId);

impl CommitmentRecord {
    pub fn key(&self) -> CommitmentKey {
        (
            self.subject_id.clone(),
            self.credential_type,
            self.period.clone(),
            self.issuer.clone(),
        )
    }
}

impl Canonical for CommitmentRecord {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("subjectId", self.subject_id.as_str())
            .with("credentialType", self.credential_type.as_str())
            .with("period", self.period.as_str())
            .with("digest", Value::Bytes(self.digest.0.to_vec()))
            .with("issuer", Value::Map(self.issuer.fields()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Commitments(Vec<CommitmentRecord>),
    TransferRequest(TransferRequest),
    TransferResponse(TransferResponse),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Commitments(_) => "CommitmentBatch",
            Payload::TransferRequest(_) => "TransferRequest",
            Payload::TransferResponse(_) => "TransferResponse",
        }
    }
}

impl Canonical for Payload {
    fn fields(&self) -> Fields {
        let f = Fields::new().with("kind", self.kind());
        match self {
            Payload::Commitments(batch) => f.with(
                "commitments",
                Value::List(batch.iter().map(|c| Value::Map(c.fields())).collect()),
            ),
            Payload::TransferRequest(r) => f.with("request", Value::Map(r.fields())),
            Payload::TransferResponse(r) => f.with("response", Value::Map(r.fields())),
        }
    }
}

/// A member-signed payload awaiting a sequence number.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Submission {
    pub submitter: MemberId,
    pub payload: Payload,
    pub submitter_sig: Signature,
}

fn submission_bytes(submitter: &MemberId, payload: &Payload) -> Vec<u8> {
    Fields::new()
        .with("submitter", Value::Map(submitter.fields()))
        .with("payload", Value::Map(payload.fields()))
        .encode()
}

impl Submission {
    pub fn sign(submitter: MemberId, key: &KeyPair, payload: Payload) -> Self {
        let sig = key.sign(&submission_bytes(&submitter, &payload));
        Submission {
            submitter,
            payload,
            submitter_sig: sig,
        }
    }
}

/// A sequenced, countersigned log entry.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ConsortiumEntry {
    pub seq: u64,
    pub submitter: MemberId,
    pub payload: Payload,
    pub submitter_sig: Signature,
    pub ordering_sig: Signature,
}

impl ConsortiumEntry {
    fn ordering_bytes(&self) -> Vec<u8> {
        Fields::new()
            .with("seq", self.seq)
            .with("submitter", Value::Map(self.submitter.fields()))
            .with("payload", Value::Map(self.payload.fields()))
            .with("submitterSig", Value::Bytes(self.submitter_sig.0.to_vec()))
            .encode()
    }

    pub fn submitter_sig_valid(&self, membership: &Membership) -> bool {
        membership.get(&self.submitter).map_or(false, |m| {
            verifies(
                &m.signing_key,
                &submission_bytes(&self.submitter, &self.payload),
                &self.submitter_sig,
            )
        })
    }

    pub fn ordering_sig_valid(&self, ordering_key: &PublicKey) -> bool {
        verifies(ordering_key, &self.ordering_bytes(), &self.ordering_sig)
    }
}

impl Canonical for ConsortiumEntry {
    fn fields(&self) -> Fields {
        Fields::new()
            .with("seq", self.seq)
            .with("submitter", Value::Map(self.submitter.fields()))
            .with("payload", Value::Map(self.payload.fields()))
            .with("submitterSig", Value::Bytes(self.submitter_sig.0.to_vec()))
            .with("orderingSig", Value::Bytes(self.ordering_sig.0.to_vec()))
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum OrderingError {
    #[error("submitter is not a registered member")]
    UnknownMember,
    #[error("bad submitter signature")]
    BadSignature,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
}

/// Stateless payload checks shared by the ordering service and members.
fn check_payload(submitter: &MemberId, payload: &Payload, membership: &Membership) -> Result<(), String> {
    match payload {
        Payload::Commitments(batch) => {
            if batch.is_empty() {
                return Err("empty commitment batch".into());
            }
            for c in batch {
                if c.issuer != *submitter {
                    return Err("commitment issuer differs from submitter".into());
                }
                if c.subject_id.is_empty() || c.period.is_empty() {
                    return Err("empty subject or period".into());
                }
            }
            Ok(())
        }
        Payload::TransferRequest(r) => {
            if r.host_school != *submitter {
                return Err("request must come from the host school".into());
            }
            if membership.get(&r.home_school).is_none() {
                return Err("home school is not a member".into());
            }
            if r.channel_id.is_empty() || r.subject_id.is_empty() {
                return Err("empty channel or subject".into());
            }
            let host = membership.get(&r.host_school).ok_or("unknown host school")?;
            if !r.signature_valid(&host.signing_key) {
                return Err("bad requester signature".into());
            }
            Ok(())
        }
        Payload::TransferResponse(r) => {
            let m = membership.get(submitter).ok_or("unknown responder")?;
            if !r.signature_valid(&m.signing_key) {
                return Err("bad responder signature".into());
            }
            Ok(())
        }
    }
}

/// The single logical sequencer.
#[derive(Clone, Debug)]
pub struct OrderingService {
    key: KeyPair,
    membership: Membership,
    log: Vec<ConsortiumEntry>,
}

impl OrderingService {
    pub fn new(key: KeyPair, membership: Membership) -> Self {
        OrderingService {
            key,
            membership,
            log: Vec::new(),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        self.key.public()
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    /// Sequences a submission. The returned entry must be delivered to every member.
    pub fn submit(&mut self, sub: Submission) -> Result<ConsortiumEntry, OrderingError> {
        let member = self
            .membership
            .get(&sub.submitter)
            .ok_or(OrderingError::UnknownMember)?;
        if !verifies(
            &member.signing_key,
            &submission_bytes(&sub.submitter, &sub.payload),
            &sub.submitter_sig,
        ) {
            return Err(OrderingError::BadSignature);
        }
        check_payload(&sub.submitter, &sub.payload, &self.membership)
            .map_err(OrderingError::MalformedPayload)?;
        let mut entry = ConsortiumEntry {
            seq: self.log.len() as u64,
            submitter: sub.submitter,
            payload: sub.payload,
            submitter_sig: sub.submitter_sig,
            ordering_sig: Signature([0; 64]),
        };
        entry.ordering_sig = self.key.sign(&entry.ordering_bytes());
        self.log.push(entry.clone());
        Ok(entry)
    }

    /// Every sequenced entry, seq 0..n-1.
    pub fn log(&self) -> &[ConsortiumEntry] {
        &self.log
    }

    /// Entries from `seq` on, for catching up a member.
    pub fn entries_from(&self, seq: u64) -> &[ConsortiumEntry] {
        &self.log[(seq as usize).min(self.log.len())..]
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum Flag {
    #[error("bad ordering signature")]
    BadOrderingSignature,
    #[error("bad submitter signature")]
    BadSubmitterSignature,
    #[error("unknown member")]
    UnknownMember,
    #[error("sequence gap: expected {expected}, got {got}")]
    SeqGap { expected: u64, got: u64 },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error("duplicate commitment")]
    DuplicateCommitment,
    #[error("duplicate channel id")]
    DuplicateChannel,
    #[error("response for unknown channel")]
    OrphanResponse,
    #[error("responder is not the home school")]
    WrongResponder,
    #[error("channel already answered")]
    ChannelClosed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    Flagged(Flag),
}

/// A transfer channel as seen in one member's accepted log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Channel {
    pub request: TransferRequest,
    pub response: Option<TransferResponse>,
}

/// One member's validated copy of the log.
#[derive(Clone, Debug)]
pub struct MemberLog {
    membership: Membership,
    ordering_key: PublicKey,
    next_seq: u64,
    accepted: Vec<ConsortiumEntry>,
    flagged: Vec<(u64, Flag)>,
    commitments: BTreeMap<CommitmentKey, CommitmentRecord>,
    commitment_seq: BTreeMap<CommitmentKey, u64>,
    by_digest: BTreeMap<Hash256, Vec<CommitmentKey>>,
    channels: BTreeMap<String, Channel>,
}

impl MemberLog {
    pub fn new(membership: Membership, ordering_key: PublicKey) -> Self {
        MemberLog {
            membership,
            ordering_key,
            next_seq: 0,
            accepted: Vec::new(),
            flagged: Vec::new(),
            commitments: BTreeMap::new(),
            commitment_seq: BTreeMap::new(),
            by_digest: BTreeMap::new(),
            channels: BTreeMap::new(),
        }
    }

    pub fn membership(&self) -> &Membership {
        &self.membership
    }

    /// Next seq this member expects.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn accepted(&self) -> &[ConsortiumEntry] {
        &self.accepted
    }

    pub fn flagged(&self) -> &[(u64, Flag)] {
        &self.flagged
    }

    /// Validates a delivered entry and appends it to the accepted view.
    ///
    /// A correctly sequenced, correctly countersigned entry advances the
    /// expected seq even when its payload is flagged.
    pub fn member_validate_and_append(&mut self, entry: ConsortiumEntry) -> AppendOutcome {
        if !entry.ordering_sig_valid(&self.ordering_key) {
            return self.flag(entry.seq, Flag::BadOrderingSignature);
        }
        if entry.seq != self.next_seq {
            return self.flag(
                entry.seq,
                Flag::SeqGap {
                    expected: self.next_seq,
                    got: entry.seq,
                },
            );
        }
        self.next_seq += 1;
        if self.membership.get(&entry.submitter).is_none() {
            return self.flag(entry.seq, Flag::UnknownMember);
        }
        if !entry.submitter_sig_valid(&self.membership) {
            return self.flag(entry.seq, Flag::BadSubmitterSignature);
        }
        if let Err(m) = check_payload(&entry.submitter, &entry.payload, &self.membership) {
            return self.flag(entry.seq, Flag::Malformed(m));
        }
        if let Err(flag) = self.check_stateful(&entry) {
            return self.flag(entry.seq, flag);
        }
        match &entry.payload {
            Payload::Commitments(batch) => {
                for c in batch {
                    self.by_digest.entry(c.digest).or_default().push(c.key());
                    self.commitment_seq.insert(c.key(), entry.seq);
                    self.commitments.insert(c.key(), c.clone());
                }
            }
            Payload::TransferRequest(r) => {
                self.channels.insert(
                    r.channel_id.clone(),
                    Channel {
                        request: r.clone(),
                        response: None,
                    },
                );
            }
            Payload::TransferResponse(r) => {
                self.channels.get_mut(&r.channel_id).unwrap().response = Some(r.clone());
            }
        }
        self.accepted.push(entry);
        AppendOutcome::Appended
    }

    fn flag(&mut self, seq: u64, flag: Flag) -> AppendOutcome {
        self.flagged.push((seq, flag.clone()));
        AppendOutcome::Flagged(flag)
    }

    fn check_stateful(&self, entry: &ConsortiumEntry) -> Result<(), Flag> {
        match &entry.payload {
            Payload::Commitments(batch) => {
                let mut seen = std::collections::BTreeSet::new();
                for c in batch {
                    let k = c.key();
                    if self.commitments.contains_key(&k) || !seen.insert(k) {
                        return Err(Flag::DuplicateCommitment);
                    }
                }
                Ok(())
            }
            Payload::TransferRequest(r) => {
                if self.channels.contains_key(&r.channel_id) {
                    Err(Flag::DuplicateChannel)
                } else {
                    Ok(())
                }
            }
            Payload::TransferResponse(r) => self.check_response(&entry.submitter, r).map_err(|e| match e {
                TransferError::WrongResponder => Flag::WrongResponder,
                TransferError::ChannelClosed => Flag::ChannelClosed,
                _ => Flag::OrphanResponse,
            }),
        }
    }

    /// Whether `responder` may answer `resp` given this member's view.
    pub fn check_response(&self, responder: &MemberId, resp: &TransferResponse) -> Result<(), TransferError> {
        let ch = self
            .channels
            .get(&resp.channel_id)
            .ok_or(TransferError::UnknownChannel)?;
        if ch.request.home_school != *responder {
            return Err(TransferError::WrongResponder);
        }
        if ch.response.is_some() {
            return Err(TransferError::ChannelClosed);
        }
        Ok(())
    }

    pub fn lookup_commitment(
        &self,
        subject_id: &str,
        credential_type: CredentialType,
        period: &str,
        issuer: &MemberId,
    ) -> Option<&CommitmentRecord> {
        self.commitments.get(&(
            subject_id.to_owned(),
            credential_type,
            period.to_owned(),
            issuer.clone(),
        ))
    }

    /// Every accepted commitment carrying `digest`.
    pub fn commitments_with_digest(&self, digest: &Hash256) -> Vec<&CommitmentRecord> {
        self.by_digest
            .get(digest)
            .map(|keys| keys.iter().map(|k| &self.commitments[k]).collect())
            .unwrap_or_default()
    }

    /// Seq of the entry that published the commitment under `key`.
    pub fn commitment_seq(&self, key: &CommitmentKey) -> Option<u64> {
        self.commitment_seq.get(key).copied()
    }

    pub fn commitments(&self) -> impl Iterator<Item = &CommitmentRecord> {
        self.commitments.values()
    }

    pub fn channel(&self, channel_id: &str) -> Option<&Channel> {
        self.channels.get(channel_id)
    }
}

pub const LOG_SNAPSHOT_MAGIC: &str = "educhain-consortium-log v1";

/// Text export of an accepted log: magic line, `entries <n>`, one hex
/// canonical entry per line in seq order, then `end <md5 of preceding bytes>`.
pub fn write_log_snapshot(log: &MemberLog) -> String {
    let mut out = format!("{LOG_SNAPSHOT_MAGIC}\nentries {}\n", log.accepted.len());
    for e in &log.accepted {
        out.push_str(&hex::encode(e.canonical_bytes()));
        out.push('\n');
    }
    let sum = digest_md5(out.as_bytes());
    out.push_str(&format!("end {}\n", sum.to_hex()));
    out
}

#[cfg(test)]
mod tests;
