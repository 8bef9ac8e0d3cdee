//! Credit-transfer channel: a host school requests a student's transcript,
//! the home school answers with the transcript sealed to the host's box key.

use std::fmt;

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{CredentialType, MemberId, MemberLog};
use crate::crypto::{verifies, KeyPair, PublicKey, Signature};
use crate::encoding::{Canonical, Fields, Value};
use crate::hash::{digest_sha256, Hash256};

/// X25519 public key used for sealed boxes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoxPublicKey(pub [u8; 32]);

impl fmt::Debug for BoxPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BoxPublicKey({})", hex::encode(&self.0[..4]))
    }
}

impl Serialize for BoxPublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for BoxPublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| serde::de::Error::custom("box key must be 32 bytes"))?;
        Ok(BoxPublicKey(arr))
    }
}

#[derive(Clone)]
pub struct BoxKeyPair {
    secret: crypto_box::SecretKey,
}

impl fmt::Debug for BoxKeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoxKeyPair").field("public", &self.public()).finish()
    }
}

impl BoxKeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        BoxKeyPair {
            secret: crypto_box::SecretKey::from_bytes(seed),
        }
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn public(&self) -> BoxPublicKey {
        BoxPublicKey(self.secret.public_key().to_bytes())
    }
}

/// Seals `plaintext` so only the holder of `recipient`'s secret can open it.
pub fn seal_payload<R: RngCore + CryptoRng>(
    rng: &mut R,
    recipient: &BoxPublicKey,
    plaintext: &[u8],
) -> Vec<u8> {
    crypto_box::PublicKey::from_bytes(recipient.0)
        .seal(rng, plaintext)
        .expect("sealing an in-memory buffer cannot fail")
}

pub fn open_payload(keys: &BoxKeyPair, sealed: &[u8]) -> Result<Vec<u8>, TransferError> {
    keys.secret
        .unseal(sealed)
        .map_err(|_| TransferError::DigestMismatch(IntegrityCheck::Seal))
}

/// Which integrity check a delivered payload failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntegrityCheck {
    /// The sealed box did not authenticate under the requester's key.
    Seal,
    /// The plaintext digest differs from the response's `payloadDigest`.
    PayloadDigest,
    /// The plaintext digest differs from the home school's published commitment.
    Commitment,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum TransferError {
    #[error("unknown channel")]
    UnknownChannel,
    #[error("responder is not the home school")]
    WrongResponder,
    #[error("channel already answered")]
    ChannelClosed,
    #[error("no response yet")]
    NoResponse,
    #[error("only the requesting school may open this payload")]
    NotRequester,
    #[error("digest mismatch ({0:?})")]
    DigestMismatch(IntegrityCheck),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferRequest {
    pub channel_id: String,
    pub host_school: MemberId,
    pub home_school: MemberId,
    pub subject_id: String,
    /// A period label, or `*` for every period.
    pub course_scope: String,
    pub requester_sig: Signature,
}

impl TransferRequest {
    pub fn new(
        channel_id: impl Into<String>,
        host_school: MemberId,
        home_school: MemberId,
        subject_id: impl Into<String>,
        course_scope: impl Into<String>,
        key: &KeyPair,
    ) -> Self {
        let mut r = TransferRequest {
            channel_id: channel_id.into(),
            host_school,
            home_school,
            subject_id: subject_id.into(),
            course_scope: course_scope.into(),
            requester_sig: Signature([0; 64]),
        };
        r.requester_sig = key.sign(&r.unsigned_fields().encode());
        r
    }

    fn unsigned_fields(&self) -> Fields {
        Fields::new()
            .with("channelId", self.channel_id.as_str())
            .with("hostSchool", Value::Map(self.host_school.fields()))
            .with("homeSchool", Value::Map(self.home_school.fields()))
            .with("subjectId", self.subject_id.as_str())
            .with("courseScope", self.course_scope.as_str())
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        verifies(key, &self.unsigned_fields().encode(), &self.requester_sig)
    }
}

impl Canonical for TransferRequest {
    fn fields(&self) -> Fields {
        self.unsigned_fields()
            .with("requesterSig", Value::Bytes(self.requester_sig.0.to_vec()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TransferResponse {
    pub channel_id: String,
    pub payload_digest: Hash256,
    #[serde(with = "hex_vec")]
    pub payload: Vec<u8>,
    pub responder_sig: Signature,
}

mod hex_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(b: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(b))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl TransferResponse {
    /// Seals `plaintext` to `recipient` and signs the response.
    pub fn new<R: RngCore + CryptoRng>(
        channel_id: impl Into<String>,
        plaintext: &[u8],
        recipient: &BoxPublicKey,
        key: &KeyPair,
        rng: &mut R,
    ) -> Self {
        let mut r = TransferResponse {
            channel_id: channel_id.into(),
            payload_digest: digest_sha256(plaintext),
            payload: seal_payload(rng, recipient, plaintext),
            responder_sig: Signature([0; 64]),
        };
        r.sign(key);
        r
    }

    /// Re-signs after the fields were changed.
    pub fn sign(&mut self, key: &KeyPair) {
        self.responder_sig = key.sign(&self.unsigned_fields().encode());
    }

    fn unsigned_fields(&self) -> Fields {
        Fields::new()
            .with("channelId", self.channel_id.as_str())
            .with("payloadDigest", Value::Bytes(self.payload_digest.0.to_vec()))
            .with("payload", Value::Bytes(self.payload.clone()))
    }

    pub fn signature_valid(&self, key: &PublicKey) -> bool {
        verifies(key, &self.unsigned_fields().encode(), &self.responder_sig)
    }
}

impl Canonical for TransferResponse {
    fn fields(&self) -> Fields {
        self.unsigned_fields()
            .with("responderSig", Value::Bytes(self.responder_sig.0.to_vec()))
    }
}

/// Checks a plaintext against a response digest and, when published, the
/// home school's commitment for the requested period.
pub fn check_delivery(
    log: &MemberLog,
    request: &TransferRequest,
    payload_digest: &Hash256,
    plaintext: &[u8],
) -> Result<(), TransferError> {
    let actual = digest_sha256(plaintext);
    if actual != *payload_digest {
        return Err(TransferError::DigestMismatch(IntegrityCheck::PayloadDigest));
    }
    if let Some(c) = log.lookup_commitment(
        &request.subject_id,
        CredentialType::Transcript,
        &request.course_scope,
        &request.home_school,
    ) {
        if c.digest != actual {
            return Err(TransferError::DigestMismatch(IntegrityCheck::Commitment));
        }
    }
    Ok(())
}

impl MemberLog {
    /// Opens the accepted response on `channel_id` as the requesting school and verifies it.
    pub fn receive_transfer(
        &self,
        me: &MemberId,
        channel_id: &str,
        keys: &BoxKeyPair,
    ) -> Result<Vec<u8>, TransferError> {
        let ch = self
            .channel(channel_id)
            .ok_or(TransferError::UnknownChannel)?;
        let resp = ch.response.as_ref().ok_or(TransferError::NoResponse)?;
        self.receive_response(me, resp, keys)
    }

    /// Verifies a response exactly as delivered, whether or not the log accepted it.
    /// Integrity failures surface as `DigestMismatch` regardless of signature state.
    pub fn receive_response(
        &self,
        me: &MemberId,
        resp: &TransferResponse,
        keys: &BoxKeyPair,
    ) -> Result<Vec<u8>, TransferError> {
        let ch = self
            .channel(&resp.channel_id)
            .ok_or(TransferError::UnknownChannel)?;
        if ch.request.host_school != *me {
            return Err(TransferError::NotRequester);
        }
        let plaintext = open_payload(keys, &resp.payload)?;
        check_delivery(self, &ch.request, &resp.payload_digest, &plaintext)?;
        Ok(plaintext)
    }
}
