//! Frozen canonical-encoding vectors, shared with any client that must
//! produce byte-identical encodings. Each vector is rebuilt twice: once with
//! the library and once with the small independent encoder below, and both
//! must match the hex recorded in `docs/encoding-vectors.json`.
//!
//! `EDUCHAIN_BLESS=1 cargo test -p educhain-core --test encoding_vectors`
//! rewrites the file from the independent encoder.

use educhain_core::block::ChainConfig;
use educhain_core::encoding::{canonical_encode_json, Fields, Value};
use educhain_core::chain::ChainEvent;
use educhain_core::crypto::AccountId;
use educhain_core::hash::digest_sha256;
use educhain_core::store::schema::Table;
use educhain_core::store::FinalStateDb;
use educhain_core::record::Role;
use educhain_core::{Canonical, Hash256, KeyPair, RecordOp, Transaction};
use ed25519_dalek::{Signature as EdSignature, Verifier, VerifyingKey};
use serde_json::{json, Value as Json};

const FILE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/encoding-vectors.json");

/// Independent encoder: names sorted byte-wise, u32 big-endian lengths.
enum O {
    S(&'static str),
    I(i128),
    B(Vec<u8>),
    M(Vec<(&'static str, O)>),
    L(Vec<O>),
}

fn enc(o: &O) -> Vec<u8> {
    match o {
        O::S(s) => s.as_bytes().to_vec(),
        O::I(i) => i.to_string().into_bytes(),
        O::B(b) => b.clone(),
        O::M(fields) => {
            let mut sorted: Vec<(&[u8], Vec<u8>)> = fields.iter().map(|(k, v)| (k.as_bytes(), enc(v))).collect();
            sorted.sort_by(|a, b| a.0.cmp(b.0));
            let mut out = Vec::new();
            for (k, v) in sorted {
                out.extend((k.len() as u32).to_be_bytes());
                out.extend(k);
                out.extend((v.len() as u32).to_be_bytes());
                out.extend(v);
            }
            out
        }
        O::L(items) => {
            let mut out = Vec::new();
            for (i, v) in items.iter().enumerate() {
                let k = format!("{i:08}");
                let v = enc(v);
                out.extend((k.len() as u32).to_be_bytes());
                out.extend(k.as_bytes());
                out.extend((v.len() as u32).to_be_bytes());
                out.extend(v);
            }
            out
        }
    }
}

fn sha256(b: &[u8]) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(b))
}

fn md5(b: &[u8]) -> String {
    use md5::Digest;
    hex::encode(md5::Md5::digest(b))
}

struct Vector {
    name: &'static str,
    note: &'static str,
    input: Option<Json>,
    oracle: Vec<u8>,
    library: Vec<u8>,
    digest: Option<(&'static str, String)>,
}

fn grade_op() -> RecordOp {
    RecordOp::UpsertGrade {
        student_id: "S1".into(),
        course_id: "CS101".into(),
        term: "2023-Fall".into(),
        score: 91,
        letter: "A".into(),
    }
}

fn grade_oracle() -> O {
    O::M(vec![
        ("kind", O::S("UpsertGrade")),
        ("studentId", O::S("S1")),
        ("courseId", O::S("CS101")),
        ("term", O::S("2023-Fall")),
        ("score", O::I(91)),
        ("letter", O::S("A")),
    ])
}

fn vectors() -> Vec<Vector> {
    let mut out = Vec::new();

    out.push(Vector {
        name: "empty-map",
        note: "A map with no fields encodes to zero bytes.",
        input: Some(json!({})),
        oracle: enc(&O::M(vec![])),
        library: canonical_encode_json(&json!({})).unwrap(),
        digest: None,
    });

    out.push(Vector {
        name: "scalars",
        note: "Strings as UTF-8, integers as decimal ASCII, byte strings raw; fields in byte order of their names.",
        input: None,
        oracle: enc(&O::M(vec![
            ("b", O::I(12)),
            ("a", O::S("x")),
            ("neg", O::I(-5)),
            ("raw", O::B(vec![0x00, 0xff])),
            ("Z", O::S("upper sorts first")),
        ])),
        library: Fields::new()
            .with("b", 12u64)
            .with("a", "x")
            .with("neg", -5i64)
            .with("raw", Value::Bytes(vec![0x00, 0xff]))
            .with("Z", "upper sorts first")
            .encode(),
        digest: None,
    });

    out.push(Vector {
        name: "nested-map-and-list",
        note: "A nested map is its own encoding used as the value; a list is a map keyed by 8-digit indices.",
        input: None,
        oracle: enc(&O::M(vec![
            ("m", O::M(vec![("k", O::S("v"))])),
            ("l", O::L(vec![O::S("a"), O::S("b")])),
        ])),
        library: Fields::new()
            .with("m", Fields::new().with("k", "v"))
            .with("l", Value::List(vec![Value::from("a"), Value::from("b")]))
            .encode(),
        digest: None,
    });

    let credential = json!({
        "credentialType": "Transcript",
        "issuer": "U1",
        "studentId": "S1",
        "name": "Ada Lovelace",
        "period": "2023-Fall",
        "course.CS101.score": 91,
        "course.CS101.letter": "A",
        "course.CS101.title": "Programming"
    });
    let credential_oracle = enc(&O::M(vec![
        ("credentialType", O::S("Transcript")),
        ("issuer", O::S("U1")),
        ("studentId", O::S("S1")),
        ("name", O::S("Ada Lovelace")),
        ("period", O::S("2023-Fall")),
        ("course.CS101.score", O::I(91)),
        ("course.CS101.letter", O::S("A")),
        ("course.CS101.title", O::S("Programming")),
    ]));
    out.push(Vector {
        name: "credential-transcript",
        note: "The field map a verifier submits; its SHA-256 is the published commitment digest.",
        digest: Some(("sha256", sha256(&credential_oracle))),
        input: Some(credential.clone()),
        oracle: credential_oracle,
        library: canonical_encode_json(&credential).unwrap(),
    });

    out.push(Vector {
        name: "op-upsert-grade",
        note: "A record operation; `kind` names the variant.",
        input: None,
        oracle: enc(&grade_oracle()),
        library: grade_op().canonical_bytes(),
        digest: None,
    });

    let key = KeyPair::from_seed([1; 32]);
    let pk = key.public().0;
    let tx = Transaction::signed(&key, 3, grade_op(), 1_700_000_000_000);
    let signing = enc(&O::M(vec![
        ("sender", O::B(hex::decode(sha256(&pk)).unwrap())),
        ("senderKey", O::B(pk.to_vec())),
        ("nonce", O::I(3)),
        ("op", grade_oracle()),
        ("timestamp", O::I(1_700_000_000_000)),
    ]));
    let vk = VerifyingKey::from_bytes(&pk).unwrap();
    vk.verify(&signing, &EdSignature::from_bytes(&tx.signature.0))
        .expect("signature covers the documented signing bytes");
    let mut signed_fields: Vec<(&'static str, O)> = vec![
        ("sender", O::B(hex::decode(sha256(&pk)).unwrap())),
        ("senderKey", O::B(pk.to_vec())),
        ("nonce", O::I(3)),
        ("op", grade_oracle()),
        ("timestamp", O::I(1_700_000_000_000)),
    ];
    signed_fields.push(("signature", O::B(tx.signature.0.to_vec())));
    let full = enc(&O::M(signed_fields));
    out.push(Vector {
        name: "tx-signing-bytes",
        note: "Bytes the sender signs with Ed25519: the transaction without `signature`. Key from seed 32 x 0x01.",
        input: None,
        digest: None,
        library: {
            let mut f = tx.fields();
            f.remove("signature");
            f.encode()
        },
        oracle: signing,
    });
    out.push(Vector {
        name: "tx-full",
        note: "The full transaction encoding; its SHA-256 is the transaction hash.",
        input: None,
        digest: Some(("sha256", sha256(&full))),
        oracle: full,
        library: tx.canonical_bytes(),
    });

    let mut db = FinalStateDb::new();
    let setup = [
        RecordOp::RegisterAccount {
            public_key: KeyPair::from_seed([2; 32]).public(),
            role: Role::Staff,
            subject_id: "T1".into(),
            name: "Grace Hopper".into(),
        },
        RecordOp::RegisterStudent {
            student_id: "S1".into(),
            name: "Ada Lovelace".into(),
            program: "CS".into(),
        },
        RecordOp::RegisterCourse {
            course_id: "CS101".into(),
            title: "Programming".into(),
            term: "2023-Fall".into(),
            owner_staff_id: "T1".into(),
        },
        grade_op(),
    ];
    for (i, op) in setup.into_iter().enumerate() {
        let ev = ChainEvent {
            block_height: 1,
            tx_hash: Hash256([i as u8; 32]),
            op,
            actor: AccountId::default(),
            timestamp: 0,
        };
        db.apply_event(&ev).expect("setup applies");
    }
    let stored = db.rows(Table::Grades).values().next().expect("grade row").encode();
    let table_digest = db.table_digest(Table::Grades);
    let row = enc(&O::M(vec![
        ("studentId", O::S("S1")),
        ("courseId", O::S("CS101")),
        ("term", O::S("2023-Fall")),
        ("score", O::I(91)),
        ("letter", O::S("A")),
        ("attachmentCid", O::S("")),
    ]));
    out.push(Vector {
        name: "grade-row",
        note: "A grades row as stored; a table digest is MD5 over its rows' encodings in key order.",
        input: None,
        digest: Some(("md5", {
            assert_eq!(table_digest.to_hex(), md5(&row), "one-row table digest");
            md5(&row)
        })),
        library: stored,
        oracle: row,
    });

    let header = ChainConfig::default().genesis_header();
    let header_oracle = enc(&O::M(vec![
        ("height", O::I(0)),
        ("parentHash", O::B(vec![0; 32])),
        ("txRoot", O::B(header.tx_root.0.to_vec())),
        ("timestamp", O::I(header.timestamp as i128)),
        ("difficultyTarget", O::B(header.difficulty_target.0.to_vec())),
        ("powNonce", O::I(header.pow_nonce as i128)),
        ("minerId", O::B(header.miner_id.0 .0.to_vec())),
    ]));
    out.push(Vector {
        name: "genesis-header",
        note: "Genesis header of the default chain configuration; its SHA-256 is the block hash.",
        input: None,
        digest: Some(("sha256", sha256(&header_oracle))),
        oracle: header_oracle,
        library: header.canonical_bytes(),
    });

    out
}

fn to_json(v: &Vector) -> Json {
    let mut o = json!({"name": v.name, "note": v.note, "hex": hex::encode(&v.oracle)});
    if let Some(input) = &v.input {
        o["input"] = input.clone();
    }
    if let Some((kind, d)) = &v.digest {
        o[*kind] = json!(d);
    }
    o
}

#[test]
fn library_matches_independent_encoder() {
    for v in vectors() {
        assert_eq!(hex::encode(&v.library), hex::encode(&v.oracle), "{}", v.name);
    }
}

#[test]
fn frozen_vectors_match() {
    let current: Vec<Json> = vectors().iter().map(to_json).collect();
    if std::env::var_os("EDUCHAIN_BLESS").is_some() {
        let doc = json!({
            "format": "educhain canonical encoding vectors v1",
            "vectors": current,
        });
        std::fs::write(FILE, serde_json::to_string_pretty(&doc).unwrap() + "\n").unwrap();
        return;
    }
    let frozen: Json = serde_json::from_str(&std::fs::read_to_string(FILE).expect("vector file")).unwrap();
    let frozen = frozen["vectors"].as_array().expect("vectors array");
    assert_eq!(frozen.len(), current.len());
    for (f, c) in frozen.iter().zip(&current) {
        assert_eq!(f, c, "vector {}", c["name"]);
    }
}

#[test]
fn credential_vectors_hash_to_their_digest() {
    let frozen: Json = serde_json::from_str(&std::fs::read_to_string(FILE).unwrap()).unwrap();
    for v in frozen["vectors"].as_array().unwrap() {
        if let (Some(input), Some(d)) = (v.get("input"), v.get("sha256")) {
            let bytes = canonical_encode_json(input).unwrap();
            assert_eq!(digest_sha256(&bytes).to_hex(), d.as_str().unwrap());
        }
    }
}
