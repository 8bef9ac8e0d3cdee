use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::hash::digest_sha256;

struct Org {
    id: MemberId,
    sign: KeyPair,
    boxk: BoxKeyPair,
}

fn org(name: &str, seed: u8) -> Org {
    let sign = KeyPair::from_seed([seed; 32]);
    Org {
        id: MemberId::new(name, &sign.public()),
        boxk: BoxKeyPair::from_seed([seed.wrapping_add(100); 32]),
        sign,
    }
}

struct World {
    ordering: OrderingService,
    orgs: Vec<Org>,
    logs: Vec<MemberLog>,
}

fn world() -> World {
    let orgs = vec![org("U1", 1), org("U2", 2), org("MOE", 3)];
    let membership = Membership::new(orgs.iter().map(|o| Member {
        id: o.id.clone(),
        signing_key: o.sign.public(),
        box_key: o.boxk.public(),
    }));
    let ordering = OrderingService::new(KeyPair::from_seed([9; 32]), membership.clone());
    let logs = orgs
        .iter()
        .map(|_| MemberLog::new(membership.clone(), ordering.public_key()))
        .collect();
    World { ordering, orgs, logs }
}

impl World {
    fn submit(&mut self, who: usize, payload: Payload) -> Result<Vec<AppendOutcome>, OrderingError> {
        let o = &self.orgs[who];
        let entry = self
            .ordering
            .submit(Submission::sign(o.id.clone(), &o.sign, payload))?;
        Ok(self
            .logs
            .iter_mut()
            .map(|l| l.member_validate_and_append(entry.clone()))
            .collect())
    }

    fn commitment(&self, who: usize, subject: &str, period: &str, digest: Hash256) -> CommitmentRecord {
        CommitmentRecord {
            subject_id: subject.into(),
            credential_type: CredentialType::Transcript,
            period: period.into(),
            digest,
            issuer: self.orgs[who].id.clone(),
        }
    }
}

#[test]
fn commitments_are_sequenced_and_replicated() {
    let mut w = world();
    let c = w.commitment(0, "S1", "2023-Fall", digest_sha256(b"t1"));
    let out = w.submit(0, Payload::Commitments(vec![c.clone()])).unwrap();
    assert!(out.iter().all(|o| *o == AppendOutcome::Appended));
    assert_eq!(w.ordering.log()[0].seq, 0);

    let issuer = w.orgs[0].id.clone();
    for l in &w.logs {
        assert_eq!(
            l.lookup_commitment("S1", CredentialType::Transcript, "2023-Fall", &issuer),
            Some(&c)
        );
        assert!(l
            .lookup_commitment("S1", CredentialType::Transcript, "2024-Spring", &issuer)
            .is_none());
    }
    let snaps: Vec<String> = w.logs.iter().map(write_log_snapshot).collect();
    assert!(snaps.windows(2).all(|p| p[0] == p[1]));
    assert!(snaps[0].starts_with(LOG_SNAPSHOT_MAGIC));
}

#[test]
fn unregistered_and_forged_submissions_are_rejected() {
    let mut w = world();
    let outsider = org("X", 42);
    let c = CommitmentRecord {
        issuer: outsider.id.clone(),
        ..w.commitment(0, "S1", "2023-Fall", Hash256::ZERO)
    };
    let sub = Submission::sign(outsider.id.clone(), &outsider.sign, Payload::Commitments(vec![c]));
    assert_eq!(w.ordering.submit(sub), Err(OrderingError::UnknownMember));

    let c = w.commitment(0, "S1", "2023-Fall", Hash256::ZERO);
    let forged = Submission::sign(w.orgs[0].id.clone(), &w.orgs[1].sign, Payload::Commitments(vec![c]));
    assert_eq!(w.ordering.submit(forged), Err(OrderingError::BadSignature));

    let wrong_issuer = w.commitment(1, "S1", "2023-Fall", Hash256::ZERO);
    assert!(matches!(
        w.submit(0, Payload::Commitments(vec![wrong_issuer])),
        Err(OrderingError::MalformedPayload(_))
    ));
    assert!(w.ordering.log().is_empty());
}

#[test]
fn duplicate_commitment_is_flagged_everywhere() {
    let mut w = world();
    let c = w.commitment(0, "S1", "2023-Fall", digest_sha256(b"a"));
    w.submit(0, Payload::Commitments(vec![c])).unwrap();
    let dup = w.commitment(0, "S1", "2023-Fall", digest_sha256(b"b"));
    let out = w.submit(0, Payload::Commitments(vec![dup])).unwrap();
    assert!(out
        .iter()
        .all(|o| *o == AppendOutcome::Flagged(Flag::DuplicateCommitment)));
    for l in &w.logs {
        assert_eq!(l.accepted().len(), 1);
        assert_eq!(l.next_seq(), 2);
    }
}

#[test]
fn two_issuers_for_one_subject_are_independent() {
    let mut w = world();
    let a = w.commitment(0, "S1", "2023-Fall", digest_sha256(b"a"));
    let b = w.commitment(1, "S1", "2023-Fall", digest_sha256(b"b"));
    w.submit(0, Payload::Commitments(vec![a.clone()])).unwrap();
    w.submit(1, Payload::Commitments(vec![b.clone()])).unwrap();
    let l = &w.logs[2];
    assert_eq!(
        l.lookup_commitment("S1", CredentialType::Transcript, "2023-Fall", &w.orgs[0].id),
        Some(&a)
    );
    assert_eq!(
        l.lookup_commitment("S1", CredentialType::Transcript, "2023-Fall", &w.orgs[1].id),
        Some(&b)
    );
    assert_eq!(l.commitments_with_digest(&a.digest), vec![&a]);
}

#[test]
fn seq_gap_and_bad_countersignature_are_flagged() {
    let mut w = world();
    let c0 = w.commitment(0, "S1", "P0", Hash256::ZERO);
    let c1 = w.commitment(0, "S1", "P1", Hash256::ZERO);
    let e0 = w
        .ordering
        .submit(Submission::sign(w.orgs[0].id.clone(), &w.orgs[0].sign, Payload::Commitments(vec![c0])))
        .unwrap();
    let e1 = w
        .ordering
        .submit(Submission::sign(w.orgs[0].id.clone(), &w.orgs[0].sign, Payload::Commitments(vec![c1])))
        .unwrap();
    let log = &mut w.logs[0];
    assert_eq!(
        log.member_validate_and_append(e1.clone()),
        AppendOutcome::Flagged(Flag::SeqGap { expected: 0, got: 1 })
    );
    let mut bad = e0.clone();
    bad.ordering_sig.0[0] ^= 1;
    assert_eq!(
        log.member_validate_and_append(bad),
        AppendOutcome::Flagged(Flag::BadOrderingSignature)
    );
    assert_eq!(log.member_validate_and_append(e0), AppendOutcome::Appended);
    assert_eq!(log.member_validate_and_append(e1), AppendOutcome::Appended);
}

#[test]
fn concurrent_submissions_get_consecutive_seqs() {
    let mut w = world();
    for i in 0..3 {
        let c = w.commitment(i, "S1", "2023-Fall", digest_sha256(&[i as u8]));
        w.submit(i, Payload::Commitments(vec![c])).unwrap();
    }
    let seqs: Vec<u64> = w.ordering.log().iter().map(|e| e.seq).collect();
    assert_eq!(seqs, vec![0, 1, 2]);
    let snaps: Vec<String> = w.logs.iter().map(write_log_snapshot).collect();
    assert!(snaps.windows(2).all(|p| p[0] == p[1]));
}

fn open_channel(w: &mut World) -> TransferRequest {
    let req = TransferRequest::new(
        "ch-1",
        w.orgs[1].id.clone(),
        w.orgs[0].id.clone(),
        "S1",
        "2023-Fall",
        &w.orgs[1].sign,
    );
    w.submit(1, Payload::TransferRequest(req.clone())).unwrap();
    req
}

#[test]
fn transfer_round_trip_matches_commitment() {
    let mut w = world();
    let transcript = b"canonical transcript bytes".to_vec();
    let c = w.commitment(0, "S1", "2023-Fall", digest_sha256(&transcript));
    w.submit(0, Payload::Commitments(vec![c])).unwrap();
    open_channel(&mut w);

    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let host_box = w.orgs[1].boxk.public();
    let resp = TransferResponse::new("ch-1", &transcript, &host_box, &w.orgs[0].sign, &mut rng);
    let out = w.submit(0, Payload::TransferResponse(resp)).unwrap();
    assert!(out.iter().all(|o| *o == AppendOutcome::Appended));

    let host = &w.orgs[1];
    let got = w.logs[1].receive_transfer(&host.id, "ch-1", &host.boxk).unwrap();
    assert_eq!(got, transcript);
    assert_eq!(
        w.logs[1].receive_transfer(&w.orgs[2].id, "ch-1", &w.orgs[2].boxk),
        Err(TransferError::NotRequester)
    );
    let sealed = &w.logs[2].channel("ch-1").unwrap().response.as_ref().unwrap().payload;
    assert!(open_payload(&w.orgs[2].boxk, sealed).is_err());
}

#[test]
fn wrong_responder_and_orphan_response_are_flagged() {
    let mut w = world();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let host_box = w.orgs[1].boxk.public();
    let orphan = TransferResponse::new("nope", b"x", &host_box, &w.orgs[0].sign, &mut rng);
    let out = w.submit(0, Payload::TransferResponse(orphan)).unwrap();
    assert!(out.iter().all(|o| *o == AppendOutcome::Flagged(Flag::OrphanResponse)));

    open_channel(&mut w);
    let wrong = TransferResponse::new("ch-1", b"x", &host_box, &w.orgs[2].sign, &mut rng);
    assert_eq!(
        w.logs[0].check_response(&w.orgs[2].id, &wrong),
        Err(TransferError::WrongResponder)
    );
    let out = w.submit(2, Payload::TransferResponse(wrong)).unwrap();
    assert!(out.iter().all(|o| *o == AppendOutcome::Flagged(Flag::WrongResponder)));
}

#[test]
fn tampered_payload_is_a_digest_mismatch() {
    let mut w = world();
    let transcript = b"true transcript".to_vec();
    let c = w.commitment(0, "S1", "2023-Fall", digest_sha256(&transcript));
    w.submit(0, Payload::Commitments(vec![c])).unwrap();
    open_channel(&mut w);
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let host_box = w.orgs[1].boxk.public();

    // Substituted plaintext, resealed to the (public) host key.
    let mut resp = TransferResponse::new("ch-1", &transcript, &host_box, &w.orgs[0].sign, &mut rng);
    resp.payload = seal_payload(&mut rng, &host_box, b"forged transcript");
    resp.sign(&w.orgs[0].sign);
    let mut view = w.logs[1].clone();
    let entry = w
        .ordering
        .submit(Submission::sign(w.orgs[0].id.clone(), &w.orgs[0].sign, Payload::TransferResponse(resp)))
        .unwrap();
    view.member_validate_and_append(entry);
    assert_eq!(
        view.receive_transfer(&w.orgs[1].id, "ch-1", &w.orgs[1].boxk),
        Err(TransferError::DigestMismatch(IntegrityCheck::PayloadDigest))
    );
}

#[test]
fn ciphertext_bit_flip_fails_authentication() {
    let keys = BoxKeyPair::from_seed([5; 32]);
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut sealed = seal_payload(&mut rng, &keys.public(), b"hello");
    assert_eq!(open_payload(&keys, &sealed).unwrap(), b"hello");
    let last = sealed.len() - 1;
    sealed[last] ^= 0x01;
    assert_eq!(
        open_payload(&keys, &sealed),
        Err(TransferError::DigestMismatch(IntegrityCheck::Seal))
    );
}

#[test]
fn in_flight_ciphertext_tamper_is_caught_at_the_requester() {
    let mut w = world();
    let transcript = b"true transcript".to_vec();
    open_channel(&mut w);
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let host_box = w.orgs[1].boxk.public();
    let resp = TransferResponse::new("ch-1", &transcript, &host_box, &w.orgs[0].sign, &mut rng);
    let entry = w
        .ordering
        .submit(Submission::sign(w.orgs[0].id.clone(), &w.orgs[0].sign, Payload::TransferResponse(resp)))
        .unwrap();
    let mut tampered = entry.clone();
    if let Payload::TransferResponse(r) = &mut tampered.payload {
        r.payload[40] ^= 0x80;
    }
    let host = &w.orgs[1];
    let log = &mut w.logs[1];
    assert_eq!(
        log.member_validate_and_append(tampered.clone()),
        AppendOutcome::Flagged(Flag::BadOrderingSignature)
    );
    let Payload::TransferResponse(r) = &tampered.payload else { unreachable!() };
    assert_eq!(
        log.receive_response(&host.id, r, &host.boxk),
        Err(TransferError::DigestMismatch(IntegrityCheck::Seal))
    );
    assert_eq!(log.member_validate_and_append(entry), AppendOutcome::Appended);
    assert_eq!(log.receive_transfer(&host.id, "ch-1", &host.boxk).unwrap(), transcript);
}
