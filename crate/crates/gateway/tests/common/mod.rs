#![allow(dead_code)]

use educhain_core::audit::AuditConfig;
use educhain_core::consortium::transfer::BoxKeyPair;
use educhain_core::consortium::{Member, MemberId, MemberLog, Membership, OrderingService};
use educhain_core::hub::HubNode;
use educhain_core::record::Role;
use educhain_core::target::Target;
use educhain_core::{ChainConfig, GenesisAccount, KeyPair, PrivateNode, RecordOp, Transaction};
use educhain_gateway::{ApiRequest, ApiResponse, Gateway, GatewaySettings, LocalBackend, RouteTable};
use serde_json::{json, Value as Json};

pub const PW: &str = "correct horse";
pub const TERM: &str = "2023-Fall";

pub struct Keys {
    pub registrar: KeyPair,
    pub auditor: KeyPair,
    pub audit_service: KeyPair,
    pub staff: KeyPair,
    pub alice: KeyPair,
    pub bob: KeyPair,
}

pub struct Fixture {
    pub gw: Gateway<LocalBackend>,
    pub keys: Keys,
    pub students: Vec<String>,
}

fn genesis(key: &KeyPair, role: Role, subject: &str) -> GenesisAccount {
    GenesisAccount {
        public_key: key.public(),
        role,
        subject_id: subject.into(),
        name: subject.into(),
    }
}

pub fn submit(node: &mut PrivateNode, key: &KeyPair, op: RecordOp) {
    let nonce = node.next_nonce(&key.account_id());
    node.submit_transaction(Transaction::signed(key, nonce, op, node.clock()))
        .unwrap();
}

pub fn account(key: &KeyPair, role: Role, subject: &str) -> RecordOp {
    RecordOp::RegisterAccount {
        public_key: key.public(),
        role,
        subject_id: subject.into(),
        name: subject.into(),
    }
}

pub fn grade(student: &str, score: u8) -> RecordOp {
    RecordOp::UpsertGrade {
        student_id: student.into(),
        course_id: "CS101".into(),
        term: TERM.into(),
        score,
        letter: "B".into(),
    }
}

/// Three nodes (n0 fallback, n1 registrar, n2 cs) with staff T1, students
/// S1 (alice) and S2 (bob) graded in CS101, and `extra` further graded
/// students. The verifier log holds the term's published transcripts.
pub fn fixture(extra: usize) -> Fixture {
    let keys = Keys {
        registrar: KeyPair::from_seed([1; 32]),
        auditor: KeyPair::from_seed([2; 32]),
        audit_service: KeyPair::from_seed([3; 32]),
        staff: KeyPair::from_seed([4; 32]),
        alice: KeyPair::from_seed([5; 32]),
        bob: KeyPair::from_seed([6; 32]),
    };
    let cfg = ChainConfig {
        initial_difficulty_target: Target::from_difficulty(4).unwrap(),
        genesis_accounts: vec![
            genesis(&keys.registrar, Role::Registrar, "REG"),
            genesis(&keys.auditor, Role::Auditor, "AUD"),
            genesis(&keys.audit_service, Role::Auditor, "AUDIT-SVC"),
        ],
        ..ChainConfig::default()
    };
    let mut n0 = PrivateNode::new("n0", "records", cfg.clone(), KeyPair::from_seed([10; 32])).unwrap();
    let r = &keys.registrar;
    submit(&mut n0, r, account(&keys.staff, Role::Staff, "T1"));
    submit(&mut n0, r, account(&keys.alice, Role::Student, "S1"));
    submit(&mut n0, r, account(&keys.bob, Role::Student, "S2"));
    let mut students = vec!["S1".to_owned(), "S2".to_owned()];
    students.extend((0..extra).map(|i| format!("X{i:03}")));
    for (i, s) in students.iter().enumerate() {
        submit(
            &mut n0,
            r,
            RecordOp::RegisterStudent {
                student_id: s.clone(),
                name: format!("Student {i}"),
                program: "CS".into(),
            },
        );
    }
    submit(
        &mut n0,
        r,
        RecordOp::RegisterCourse {
            course_id: "CS101".into(),
            title: "Intro".into(),
            term: TERM.into(),
            owner_staff_id: "T1".into(),
        },
    );
    n0.produce_block().unwrap();
    for (i, s) in students.iter().enumerate() {
        submit(&mut n0, &keys.staff, grade(s, 60 + (i % 40) as u8));
    }
    n0.produce_block().unwrap();

    let chain = n0.chain();
    let mut nodes = vec![n0];
    for (k, id) in [(1u8, "n1"), (2, "n2")] {
        let mut n = PrivateNode::new(id, "records", cfg.clone(), KeyPair::from_seed([10 + k; 32])).unwrap();
        for b in chain.iter().skip(1) {
            n.import_block(b.clone()).unwrap();
        }
        nodes.push(n);
    }

    // Hub of "U1" publishes the term; the Ministry's log view serves /verify.
    let hub_key = KeyPair::from_seed([20; 32]);
    let hub_box = BoxKeyPair::from_seed([21; 32]);
    let moe_key = KeyPair::from_seed([22; 32]);
    let moe_box = BoxKeyPair::from_seed([23; 32]);
    let hub_id = MemberId::new("U1", &hub_key.public());
    let moe_id = MemberId::new("MOE", &moe_key.public());
    let membership = Membership::new([
        Member {
            id: hub_id.clone(),
            signing_key: hub_key.public(),
            box_key: hub_box.public(),
        },
        Member {
            id: moe_id,
            signing_key: moe_key.public(),
            box_key: moe_box.public(),
        },
    ]);
    let mut ordering = OrderingService::new(KeyPair::from_seed([24; 32]), membership.clone());
    let mut replica = PrivateNode::new("hub", "hub", cfg, KeyPair::from_seed([25; 32])).unwrap();
    for b in chain.iter().skip(1) {
        replica.import_block(b.clone()).unwrap();
    }
    let mut hub = HubNode::new(
        hub_id,
        hub_key,
        hub_box,
        replica,
        MemberLog::new(membership.clone(), ordering.public_key()),
    );
    let mut ministry = MemberLog::new(membership, ordering.public_key());
    let entry = hub.close_period(&mut ordering, TERM).unwrap().unwrap();
    ministry.member_validate_and_append(entry);

    let mut backend = LocalBackend::new(
        nodes,
        AuditConfig {
            chunk_size: 64,
            auditor: keys.audit_service.clone(),
        },
    );
    backend.verifier_log = Some(ministry);
    backend.clock = 1_000;
    let routes = RouteTable::new("n0").with("registrar", "n1").with("cs", "n2");
    let gw = Gateway::new(backend, routes, GatewaySettings::default(), Some(42));
    for k in [&keys.registrar, &keys.auditor, &keys.staff, &keys.alice, &keys.bob] {
        gw.set_password(k.account_id(), PW);
    }
    Fixture { gw, keys, students }
}

impl Fixture {
    pub fn login(&self, key: &KeyPair) -> String {
        let r = self.gw.handle(&ApiRequest::post(
            "/login",
            json!({"accountId": key.account_id().to_hex(), "password": PW}),
        ));
        assert_eq!(r.status, 200, "{}", r.body);
        r.body["token"].as_str().unwrap().to_owned()
    }

    pub fn call(&self, req: ApiRequest) -> ApiResponse {
        self.gw.handle(&req)
    }

    /// A transaction signed by `key` with its next nonce on the fallback node.
    pub fn signed(&self, key: &KeyPair, op: RecordOp) -> Json {
        let backend = self.gw.backend();
        let node = backend.nodes.iter().find(|n| n.id() == "n0").unwrap();
        let nonce = node.next_nonce(&key.account_id());
        serde_json::to_value(Transaction::signed(key, nonce, op, 0)).unwrap()
    }

    pub fn mempool_total(&self) -> usize {
        self.gw.backend().nodes.iter().map(|n| n.mempool().len()).sum()
    }

    pub fn heights(&self) -> Vec<u64> {
        self.gw.backend().nodes.iter().map(|n| n.height()).collect()
    }
}
