mod common;

use common::*;
use educhain_core::hash::digest_sha256;
use educhain_core::hub::transcript_fields;
use educhain_core::record::Role;
use educhain_core::store::schema::{RowKey, Table};
use educhain_core::{KeyPair, RecordOp};
use educhain_gateway::ApiRequest;
use serde_json::{json, Value as Json};

#[test]
fn login_issues_session_with_chain_role() {
    let f = fixture(0);
    let r = f.call(ApiRequest::post(
        "/login",
        json!({"accountId": f.keys.staff.account_id().to_hex(), "password": PW}),
    ));
    assert_eq!(r.status, 200);
    assert_eq!(r.body["role"], "Staff");
    assert_eq!(r.body["subjectId"], "T1");
    assert_eq!(r.body["token"].as_str().unwrap().len(), 64);

    let token = r.body["token"].as_str().unwrap();
    let acct = f.call(ApiRequest::get("/account").token(token));
    assert_eq!(acct.body["nextNonce"], 2);
    assert_eq!(acct.body["role"], "Staff");
}

#[test]
fn failed_logins_have_one_shape_and_lock_at_ten() {
    let f = fixture(0);
    let wrong = |id: String| f.call(ApiRequest::post("/login", json!({"accountId": id, "password": "nope"})));
    let unknown = wrong(KeyPair::from_seed([77; 32]).account_id().to_hex());
    let bad = wrong(f.keys.alice.account_id().to_hex());
    assert_eq!((unknown.status, unknown.code()), (401, Some("BadCredentials")));
    assert_eq!(unknown.body, bad.body);
    for _ in 0..8 {
        assert_eq!(wrong(f.keys.alice.account_id().to_hex()).code(), Some("BadCredentials"));
    }
    let tenth = wrong(f.keys.alice.account_id().to_hex());
    assert_eq!((tenth.status, tenth.code()), (423, Some("AccountLocked")));
    let correct = f.call(ApiRequest::post(
        "/login",
        json!({"accountId": f.keys.alice.account_id().to_hex(), "password": PW}),
    ));
    assert_eq!(correct.code(), Some("AccountLocked"));
}

#[test]
fn expired_and_revoked_sessions_are_rejected() {
    let f = fixture(0);
    let token = f.login(&f.keys.alice);
    assert_eq!(f.call(ApiRequest::get("/grades").token(&token)).status, 200);
    f.gw.backend().clock += 3_600;
    let r = f.call(ApiRequest::get("/grades").token(&token));
    assert_eq!((r.status, r.code()), (401, Some("Unauthenticated")));

    let token = f.login(&f.keys.alice);
    assert_eq!(f.call(ApiRequest::post("/logout", Json::Null).token(&token)).status, 200);
    assert_eq!(f.call(ApiRequest::get("/grades").token(&token)).status, 401);
}

#[test]
fn student_reads_are_pinned_to_own_record() {
    let f = fixture(0);
    let token = f.login(&f.keys.alice);
    let r = f.call(ApiRequest::get("/grades").token(&token));
    let rows = r.body["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["studentId"], "S1");
    assert_eq!(r.body["summary"][0]["term"], TERM);
    assert_eq!(r.body["summary"][0]["courses"], 1);

    assert_eq!(f.call(ApiRequest::get("/grades?studentId=S2").token(&token)).status, 403);
    let p = f.call(ApiRequest::get("/profile").token(&token));
    assert_eq!(p.body["profile"]["studentId"], "S1");

    let staff = f.login(&f.keys.staff);
    let all = f.call(ApiRequest::get("/grades?courseId=CS101").token(&staff));
    assert_eq!(all.body["rows"].as_array().unwrap().len(), 2);
    let p = f.call(ApiRequest::get("/profile?studentId=S2").token(&staff));
    assert_eq!(p.body["profile"]["studentId"], "S2");
    assert_eq!(
        f.call(ApiRequest::get("/profile?studentId=NOPE").token(&staff)).code(),
        Some("UnknownStudent")
    );
}

#[test]
fn grade_summary_aggregates_per_term() {
    let f = fixture(5);
    let staff = f.login(&f.keys.staff);
    let r = f.call(ApiRequest::get("/grades").token(&staff));
    let s = &r.body["summary"][0];
    assert_eq!(s["courses"], 7);
    assert_eq!(s["minScore"], 60);
    assert_eq!(s["maxScore"], 66);
    assert_eq!(s["meanScore"], 63.0);
}

#[test]
fn staff_grade_write_reports_block_number_only_after_inclusion() {
    let f = fixture(0);
    let staff = f.login(&f.keys.staff);
    let tx = f.signed(&f.keys.staff, grade("S1", 95));
    let r = f.call(ApiRequest::post("/grades", json!({"tx": tx})).token(&staff));
    assert_eq!(r.status, 200, "{}", r.body);
    let hash = r.body["txHash"].as_str().unwrap().to_owned();
    assert_eq!(r.body["node"], "n0");
    assert_eq!(f.mempool_total(), 1);

    let status = f.call(ApiRequest::get(&format!("/tx/{hash}")).token(&staff));
    assert_eq!(status.body["status"], "pending");
    assert!(status.body.get("blockNumber").is_none());

    assert!(f.gw.backend().mine("n0"));
    let status = f.call(ApiRequest::get(&format!("/tx/{hash}")).token(&staff));
    assert_eq!(status.body["status"], "included");
    assert_eq!(status.body["blockNumber"], 3);

    let alice = f.login(&f.keys.alice);
    let log = f.call(ApiRequest::get("/oplog").token(&staff));
    let last = log.body["entries"].as_array().unwrap().last().unwrap().clone();
    assert_eq!(last["txHash"], hash);
    assert_eq!(last["blockNumber"], 3);
    let own = f.call(ApiRequest::get("/oplog").token(&alice));
    assert_eq!(own.body["total"], 0);
}

#[test]
fn write_errors_map_to_codes() {
    let f = fixture(0);
    let staff = f.login(&f.keys.staff);
    let post = |tx: Json| f.call(ApiRequest::post("/grades", json!({"tx": tx})).token(&staff));

    // stale nonce
    let mut tx = f.signed(&f.keys.staff, grade("S1", 90));
    assert_eq!(post(tx.clone()).status, 200);
    let r = post(tx.clone());
    assert_eq!((r.status, r.code()), (409, Some("BadNonce")));

    // tampered payload
    tx["nonce"] = json!(tx["nonce"].as_u64().unwrap() + 1);
    let r = post(tx);
    assert_eq!((r.status, r.code()), (422, Some("BadSignature")));

    // wrong kind for the endpoint
    let r = post(f.signed(
        &f.keys.staff,
        RecordOp::UpdateProfile {
            student_id: "S1".into(),
            field: "email".into(),
            value: "x".into(),
        },
    ));
    assert_eq!((r.status, r.code()), (422, Some("WrongOperation")));

    // someone else's transaction
    let r = post(f.signed(&f.keys.registrar, grade("S1", 1)));
    assert_eq!((r.status, r.code()), (403, Some("Forbidden")));

    // malformed body
    let r = f.call(ApiRequest::post("/grades", json!({"tx": 5})).token(&staff));
    assert_eq!((r.status, r.code()), (422, Some("SchemaViolation")));

    // chain rule: unknown course
    let r = post(f.signed(
        &f.keys.staff,
        RecordOp::UpsertGrade {
            student_id: "S1".into(),
            course_id: "MA200".into(),
            term: TERM.into(),
            score: 50,
            letter: "C".into(),
        },
    ));
    assert_eq!(r.status, 403, "{}", r.body);
    assert_eq!(r.code(), Some("PermissionDenied"));
}

#[test]
fn student_grade_write_never_reaches_a_chain() {
    let f = fixture(0);
    let alice = f.login(&f.keys.alice);
    let before = f.heights();
    let tx = f.signed(&f.keys.alice, grade("S1", 100));
    let r = f.call(ApiRequest::post("/grades", json!({"tx": tx})).token(&alice));
    assert_eq!(r.status, 403);
    assert_eq!(f.mempool_total(), 0);
    assert!(!f.gw.backend().mine("n0"));
    assert_eq!(f.heights(), before);
}

#[test]
fn profile_updates_follow_chain_field_rules() {
    let f = fixture(0);
    let alice = f.login(&f.keys.alice);
    let edit = |field: &str, student: &str| {
        let tx = f.signed(
            &f.keys.alice,
            RecordOp::UpdateProfile {
                student_id: student.into(),
                field: field.into(),
                value: "v".into(),
            },
        );
        f.call(ApiRequest::put("/profile", json!({"tx": tx})).token(&alice))
    };
    assert_eq!(edit("email", "S1").status, 200);
    assert_eq!(edit("name", "S1").code(), Some("PermissionDenied"));
    assert_eq!(edit("email", "S2").code(), Some("PermissionDenied"));
}

#[test]
fn routing_follows_department_and_fails_over() {
    let f = fixture(0);
    let staff = f.login(&f.keys.staff);
    let r = f.call(ApiRequest::get("/grades").token(&staff).department("registrar"));
    assert_eq!((r.body["node"].as_str(), r.body["failover"].as_bool()), (Some("n1"), Some(false)));
    f.gw.backend().down.insert("n2".into());
    let r = f.call(ApiRequest::get("/grades").token(&staff).department("cs"));
    assert_eq!((r.body["node"].as_str(), r.body["failover"].as_bool()), (Some("n0"), Some(true)));
    let r = f.call(ApiRequest::get("/grades").token(&staff).department("physics"));
    assert_eq!((r.status, r.code()), (503, Some("NoNodeAvailable")));
}

#[test]
fn attachment_content_must_match_cid() {
    let f = fixture(0);
    let staff = f.login(&f.keys.staff);
    let content = b"lab report".to_vec();
    let op = |cid, size| RecordOp::AttachFile {
        student_id: "S1".into(),
        course_id: "CS101".into(),
        cid,
        media_label: "pdf".into(),
        size,
    };
    let good = f.signed(&f.keys.staff, op(digest_sha256(&content), content.len() as u64));
    let bad = f.signed(&f.keys.staff, op(digest_sha256(b"other"), content.len() as u64));
    let r = f.call(ApiRequest::post("/attachments", json!({"tx": bad, "content": hex::encode(&content)})).token(&staff));
    assert_eq!(r.code(), Some("ContentMismatch"));
    let r = f.call(ApiRequest::post("/attachments", json!({"tx": good, "content": hex::encode(&content)})).token(&staff));
    assert_eq!(r.status, 200, "{}", r.body);
    let backend = f.gw.backend();
    assert_eq!(backend.nodes[0].content().get(&digest_sha256(&content)).unwrap(), &content[..]);
}

#[test]
fn transcript_export_reprompts_password() {
    let f = fixture(0);
    let alice = f.login(&f.keys.alice);
    let export = |pw: &str, student: Option<&str>| {
        let mut body = json!({"password": pw, "courseIds": ["CS101"]});
        if let Some(s) = student {
            body["studentId"] = json!(s);
        }
        f.call(ApiRequest::post("/transcript/export", body).token(&alice))
    };
    assert_eq!(export("wrong", None).code(), Some("BadCredentials"));
    assert_eq!(export(PW, Some("S2")).status, 403);
    let r = export(PW, None);
    assert_eq!(r.status, 200, "{}", r.body);
    assert_eq!(r.body["transcript"]["studentId"], "S1");
    assert_eq!(r.body["transcript"]["rows"][0]["courseId"], "CS101");

    let reg = f.login(&f.keys.registrar);
    let r = f.call(
        ApiRequest::post("/transcript/export", json!({"password": PW, "courseIds": ["CS101"]})).token(&reg),
    );
    assert_eq!(r.code(), Some("SchemaViolation"));
    let r = f.call(
        ApiRequest::post(
            "/transcript/export",
            json!({"password": PW, "studentId": "S2", "courseIds": ["CS101"]}),
        )
        .token(&reg),
    );
    assert_eq!(r.body["transcript"]["studentId"], "S2");
}

#[test]
fn registrar_registers_account_with_password() {
    let f = fixture(0);
    let reg = f.login(&f.keys.registrar);
    let carol = KeyPair::from_seed([50; 32]);
    let tx = f.signed(&f.keys.registrar, account(&carol, Role::Student, "S3"));
    let r = f.call(ApiRequest::post("/accounts", json!({"tx": tx, "password": "pw3"})).token(&reg));
    assert_eq!(r.status, 200, "{}", r.body);
    assert_eq!(r.body["accountId"], carol.account_id().to_hex());
    // not on chain yet
    let login = |f: &Fixture| {
        f.call(ApiRequest::post(
            "/login",
            json!({"accountId": carol.account_id().to_hex(), "password": "pw3"}),
        ))
    };
    assert_eq!(login(&f).code(), Some("BadCredentials"));
    f.gw.backend().mine("n0");
    let r = login(&f);
    assert_eq!(r.status, 200);
    assert_eq!(r.body["role"], "Student");
}

#[test]
fn registrar_creates_students_and_courses() {
    let f = fixture(0);
    let reg = f.login(&f.keys.registrar);
    let tx = f.signed(
        &f.keys.registrar,
        RecordOp::RegisterStudent {
            student_id: "S7".into(),
            name: "Grace".into(),
            program: "Math".into(),
        },
    );
    assert_eq!(f.call(ApiRequest::post("/students", json!({"tx": tx})).token(&reg)).status, 200);
    f.gw.backend().mine("n0");
    let tx = f.signed(
        &f.keys.registrar,
        RecordOp::RegisterCourse {
            course_id: "MA200".into(),
            title: "Algebra".into(),
            term: TERM.into(),
            owner_staff_id: "T1".into(),
        },
    );
    assert_eq!(f.call(ApiRequest::post("/courses", json!({"tx": tx})).token(&reg)).status, 200);
    f.gw.backend().mine("n0");
    let p = f.call(ApiRequest::get("/profile?studentId=S7").token(&reg));
    assert_eq!(p.body["profile"]["name"], "Grace");
    let wrong = f.signed(&f.keys.registrar, grade("S7", 1));
    let r = f.call(ApiRequest::post("/courses", json!({"tx": wrong})).token(&reg));
    assert_eq!(r.code(), Some("WrongOperation"));
}

fn published(f: &Fixture, student: &str) -> Json {
    let backend = f.gw.backend();
    transcript_fields(backend.nodes[0].db(), "U1", student, TERM, None)
        .unwrap()
        .to_json()
}

#[test]
fn verify_is_public_and_exact() {
    let f = fixture(0);
    let fields = published(&f, "S1");
    let r = f.call(ApiRequest::post("/verify", fields.clone()));
    assert_eq!(r.status, 200);
    assert_eq!(r.body["status"], "Verified");
    assert_eq!(r.body["issuer"], "U1");
    assert_eq!(r.body["seq"], 0);

    let mut score = fields.clone();
    score["course.CS101.score"] = json!(score["course.CS101.score"].as_i64().unwrap() + 1);
    let mut name = fields.clone();
    name["name"] = json!("Someone Else");
    let mut period = fields.clone();
    period["period"] = json!("2024-Spring");
    for perturbed in [score, name, period] {
        let r = f.call(ApiRequest::post("/verify", perturbed));
        assert_eq!(r.body, json!({"status": "NotFound"}));
    }
    let r = f.call(ApiRequest::post("/verify", json!({"name": [1, 2]})));
    assert_eq!((r.status, r.code()), (422, Some("SchemaViolation")));
}

#[test]
fn verify_every_published_credential_and_every_single_field_perturbation() {
    let f = fixture(48);
    let mut verified = 0;
    let mut rejected = 0;
    for s in &f.students {
        let fields = published(&f, s);
        assert_eq!(f.call(ApiRequest::post("/verify", fields.clone())).body["status"], "Verified");
        verified += 1;
        for key in fields.as_object().unwrap().keys() {
            let mut p = fields.clone();
            p[key] = match &p[key] {
                Json::Number(n) => json!(n.as_i64().unwrap() + 1),
                Json::String(s) => json!(format!("{s}x")),
                other => panic!("unexpected {other}"),
            };
            assert_eq!(f.call(ApiRequest::post("/verify", p)).body["status"], "NotFound", "{s} {key}");
            rejected += 1;
        }
    }
    assert_eq!(verified, 50);
    assert_eq!(rejected, 50 * 8);
}

#[test]
fn auditor_runs_round_and_reads_reports() {
    let f = fixture(20);
    f.gw.backend().nodes[2]
        .db_mut()
        .tamper_set_field(Table::Grades, &RowKey::new(["X007", "CS101", TERM]), "score", "100")
        .unwrap();
    let aud = f.login(&f.keys.auditor);
    let r = f.call(ApiRequest::post("/audit/run", json!({"tables": ["grades"], "roundId": "r1"})).token(&aud));
    assert_eq!(r.status, 200, "{}", r.body);
    let report = &r.body["reports"][0];
    assert_eq!(report["divergentNodes"], json!(["n2"]));
    assert_eq!(report["localizedRows"]["n2"][0]["rowKey"], "X007|CS101|2023-Fall");
    assert_eq!(report["repairsApplied"], 1);
    assert!(report["canonical"].as_str().unwrap().len() > 100);

    let listed = f.call(ApiRequest::get("/audit/reports?roundId=r1").token(&aud));
    assert_eq!(listed.body["reports"].as_array().unwrap().len(), 1);
    assert_eq!(listed.body["reports"][0]["canonical"], report["canonical"]);

    let default = f.call(ApiRequest::post("/audit/run", Json::Null).token(&aud));
    assert_eq!(default.body["reports"].as_array().unwrap().len(), Table::ALL.len());
}

#[test]
fn unknown_paths_and_methods() {
    let f = fixture(0);
    assert_eq!(f.call(ApiRequest::get("/nope")).code(), Some("UnknownEndpoint"));
    assert_eq!(f.call(ApiRequest::new("DELETE", "/grades")).code(), Some("MethodNotAllowed"));
}
