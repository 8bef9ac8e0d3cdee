//! Executes a scenario against a testbed and renders the run report.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use educhain_core::audit::{AuditReport, NodeFinding};
use educhain_core::consortium::transfer::TransferError;
use educhain_core::consortium::{CredentialType, Payload};
use educhain_core::hash::digest_sha256;
use educhain_core::record::{OpKind, Role};
use educhain_core::store::schema::{RowKey, Table};
use educhain_core::{Fields, RecordOp, Value};
use educhain_gateway::{ApiRequest, ApiResponse, Backend};
use rand::Rng;
use serde_json::json;

use crate::fault::FaultSpec;
use crate::net::MessageStats;
use crate::scenario::{Action, Expectation, Outcome, Perturb, Scenario, Step};
use crate::testbed::Testbed;
use crate::SimError;

/// Why a step failed: what the script expected and what happened.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Failure {
    pub expected: String,
    pub actual: String,
}

impl Failure {
    fn new(expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Failure {
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expected {}, got {}", self.expected, self.actual)
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::new("step runs", e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub line: usize,
    pub at: u64,
    pub text: String,
    pub result: Result<String, Failure>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeSummary {
    pub id: String,
    pub height: u64,
    pub tip: String,
    pub digests: Vec<(Table, String)>,
}

/// Everything a run produced, in logical time only, so equal seeds give equal text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub config: String,
    pub steps: Vec<StepRecord>,
    pub faults: Vec<String>,
    pub messages: MessageStats,
    pub end_tick: u64,
    pub blocks: Vec<(String, u64)>,
    pub nodes: Vec<NodeSummary>,
    pub consortium: Vec<String>,
    pub audits: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.failure().is_none()
    }

    pub fn failure(&self) -> Option<(&StepRecord, &Failure)> {
        self.steps.iter().find_map(|s| s.result.as_ref().err().map(|f| (s, f)))
    }

    pub fn render(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "scenario {}", self.scenario);
        let _ = writeln!(o, "seed {}", self.seed);
        let _ = writeln!(o, "config {}", self.config);
        let _ = writeln!(o, "steps {}", self.steps.len());
        for (i, s) in self.steps.iter().enumerate() {
            let outcome = match &s.result {
                Ok(detail) => format!("ok {detail}"),
                Err(_) => "FAIL".to_owned(),
            };
            let _ = writeln!(o, "  {i:>4} @{:<6} {} -> {outcome}", s.at, s.text);
        }
        let _ = writeln!(o, "faults {}", self.faults.len());
        for f in &self.faults {
            let _ = writeln!(o, "  {f}");
        }
        let m = &self.messages;
        let kinds: Vec<String> = m.by_kind.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(
            o,
            "messages sent={} delivered={} dropped={} {}",
            m.sent,
            m.delivered,
            m.dropped,
            kinds.join(" ")
        );
        let _ = writeln!(o, "end tick {}", self.end_tick);
        for (u, n) in &self.blocks {
            let _ = writeln!(o, "blocks {u} mined={n}");
        }
        let _ = writeln!(o, "nodes");
        for n in &self.nodes {
            let _ = writeln!(o, "  {} height={} tip={}", n.id, n.height, n.tip);
            for (t, d) in &n.digests {
                let _ = writeln!(o, "    {:<11} {d}", t.name());
            }
        }
        let _ = writeln!(o, "consortium entries={}", self.consortium.len());
        for c in &self.consortium {
            let _ = writeln!(o, "  {c}");
        }
        let _ = writeln!(o, "audits {}", self.audits.len());
        for a in &self.audits {
            let _ = writeln!(o, "  {a}");
        }
        match self.failure() {
            None => {
                let _ = writeln!(o, "result PASS");
            }
            Some((s, f)) => {
                let _ = writeln!(o, "result FAIL at line {} (@{} {})", s.line, s.at, s.text);
                let _ = writeln!(o, "  expected: {}", f.expected);
                let _ = writeln!(o, "  actual:   {}", f.actual);
            }
        }
        o
    }
}

fn letter(score: u8) -> &'static str {
    match score {
        90.. => "A",
        80..=89 => "B",
        70..=79 => "C",
        60..=69 => "D",
        _ => "F",
    }
}

fn error_code(r: &ApiResponse) -> String {
    match r.code() {
        Some(c) => format!("{} {c}", r.status),
        None => r.status.to_string(),
    }
}

fn check(expect: &Outcome, r: &ApiResponse) -> Result<String, Failure> {
    if expect.matches(r.status, r.code()) {
        Ok(error_code(r))
    } else {
        Err(Failure::new(format!("response {expect}"), format!("{} {}", r.status, r.body)))
    }
}

fn ok200(r: &ApiResponse, what: &str) -> Result<(), Failure> {
    if r.status == 200 {
        Ok(())
    } else {
        Err(Failure::new(format!("{what} succeeds"), format!("{} {}", r.status, r.body)))
    }
}

fn account_op(key: &educhain_core::KeyPair, role: Role, subject: &str, name: &str) -> RecordOp {
    RecordOp::RegisterAccount {
        public_key: key.public(),
        role,
        subject_id: subject.into(),
        name: name.into(),
    }
}

/// Runs every step in order, stopping at the first failure.
pub struct Runner<'a> {
    pub tb: &'a mut Testbed,
    /// Latest audit report per (university, table).
    pub last_audit: BTreeMap<(usize, Table), AuditReport>,
    audits: Vec<String>,
}

impl<'a> Runner<'a> {
    pub fn new(tb: &'a mut Testbed) -> Self {
        Runner {
            tb,
            last_audit: BTreeMap::new(),
            audits: Vec::new(),
        }
    }

    pub fn run(&mut self, scenario: &Scenario) -> RunReport {
        let mut steps = Vec::new();
        for step in &scenario.steps {
            self.tb.advance_to(step.at);
            let at = self.tb.now();
            let result = self.exec(step);
            let failed = result.is_err();
            steps.push(StepRecord {
                line: step.line,
                at,
                text: step.text.clone(),
                result,
            });
            if failed {
                break;
            }
        }
        self.report(scenario, steps)
    }

    fn report(&self, scenario: &Scenario, steps: Vec<StepRecord>) -> RunReport {
        let tb = &*self.tb;
        let mut nodes = Vec::new();
        let mut blocks = Vec::new();
        for (k, u) in tb.universities.iter().enumerate() {
            blocks.push((u.name.clone(), u.blocks_mined));
            let mut ids = u.node_ids.clone();
            ids.push(u.hub_node.clone());
            for id in ids {
                let (height, tip) = if id == u.hub_node {
                    (u.hub.replica().height(), u.hub.replica().tip_hash())
                } else {
                    let b = u.gateway.backend();
                    let n = b.node(&id).expect("listed node exists");
                    (n.height(), n.tip_hash())
                };
                let digests = tb
                    .digests(k, &id)
                    .unwrap_or_default()
                    .into_iter()
                    .map(|(t, d)| (t, d.to_hex()))
                    .collect();
                nodes.push(NodeSummary {
                    id,
                    height,
                    tip: tip.to_hex(),
                    digests,
                });
            }
        }
        let consortium = tb
            .ordering
            .log()
            .iter()
            .map(|e| {
                let detail = match &e.payload {
                    Payload::Commitments(c) => format!("{} commitments", c.len()),
                    Payload::TransferRequest(r) => format!("{} asks {} for {} {}", r.host_school.org, r.home_school.org, r.subject_id, r.course_scope),
                    Payload::TransferResponse(r) => format!("{} payloadDigest={}", r.channel_id, r.payload_digest.to_hex()),
                };
                format!("#{} {} {} {detail}", e.seq, e.submitter.org, e.payload.kind())
            })
            .collect();
        RunReport {
            scenario: scenario.name.clone(),
            seed: tb.cfg.seed,
            config: tb.cfg.summary(),
            steps,
            faults: tb.fault_log.clone(),
            messages: tb.stats().clone(),
            end_tick: tb.now(),
            blocks,
            nodes,
            consortium,
            audits: self.audits.clone(),
        }
    }

    fn exec(&mut self, step: &Step) -> Result<String, Failure> {
        let tb = &mut *self.tb;
        match &step.action {
            Action::Student {
                uni,
                id,
                name,
                program,
                dept,
            } => {
                let u = tb.uni_index(uni)?;
                let r = tb.write_as(
                    u,
                    "registrar",
                    "POST",
                    "/students",
                    RecordOp::RegisterStudent {
                        student_id: id.clone(),
                        name: name.clone(),
                        program: program.clone(),
                    },
                    json!({}),
                );
                ok200(&r, "RegisterStudent")?;
                let key = tb.add_user(u, id, Role::Student, id, dept.clone());
                let password = tb.user(u, id)?.password.clone();
                let r = tb.write_as(
                    u,
                    "registrar",
                    "POST",
                    "/accounts",
                    account_op(&key, Role::Student, id, name),
                    json!({ "password": password }),
                );
                ok200(&r, "RegisterAccount")?;
                Ok(format!("account {}", key.account_id().short()))
            }
            Action::Staff { uni, id, name, dept } => {
                let u = tb.uni_index(uni)?;
                let key = tb.add_user(u, id, Role::Staff, id, dept.clone());
                let password = tb.user(u, id)?.password.clone();
                let r = tb.write_as(
                    u,
                    "registrar",
                    "POST",
                    "/accounts",
                    account_op(&key, Role::Staff, id, name),
                    json!({ "password": password }),
                );
                ok200(&r, "RegisterAccount")?;
                Ok(format!("account {}", key.account_id().short()))
            }
            Action::Course {
                uni,
                id,
                title,
                term,
                owner,
                by,
                expect,
            } => {
                let u = tb.uni_index(uni)?;
                let op = RecordOp::RegisterCourse {
                    course_id: id.clone(),
                    title: title.clone(),
                    term: term.clone(),
                    owner_staff_id: owner.clone(),
                };
                check(expect, &tb.write_as(u, by, "POST", "/courses", op, json!({})))
            }
            Action::Cohort {
                uni,
                prefix,
                count,
                program,
            } => {
                let u = tb.uni_index(uni)?;
                for i in 0..*count {
                    let op = RecordOp::RegisterStudent {
                        student_id: format!("{prefix}{i:03}"),
                        name: format!("Student {prefix}{i:03}"),
                        program: program.clone(),
                    };
                    ok200(&tb.write_as(u, "registrar", "POST", "/students", op, json!({})), "RegisterStudent")?;
                }
                Ok(format!("{count} students"))
            }
            Action::Grade {
                uni,
                student,
                course,
                term,
                score,
                letter: l,
                by,
                expect,
            } => {
                let u = tb.uni_index(uni)?;
                let op = RecordOp::UpsertGrade {
                    student_id: student.clone(),
                    course_id: course.clone(),
                    term: term.clone(),
                    score: *score,
                    letter: l.clone().unwrap_or_else(|| letter(*score).to_owned()),
                };
                check(expect, &tb.write_as(u, by, "POST", "/grades", op, json!({})))
            }
            Action::GradeCohort {
                uni,
                prefix,
                count,
                course,
                term,
                by,
            } => {
                let u = tb.uni_index(uni)?;
                for i in 0..*count {
                    let score: u8 = tb.rng().gen_range(40..=100);
                    let op = RecordOp::UpsertGrade {
                        student_id: format!("{prefix}{i:03}"),
                        course_id: course.clone(),
                        term: term.clone(),
                        score,
                        letter: letter(score).to_owned(),
                    };
                    ok200(&tb.write_as(u, by, "POST", "/grades", op, json!({})), "UpsertGrade")?;
                }
                Ok(format!("{count} grades"))
            }
            Action::Profile {
                uni,
                student,
                field,
                value,
                by,
                expect,
            } => {
                let u = tb.uni_index(uni)?;
                let op = RecordOp::UpdateProfile {
                    student_id: student.clone(),
                    field: field.clone(),
                    value: value.clone(),
                };
                check(expect, &tb.write_as(u, by, "PUT", "/profile", op, json!({})))
            }
            Action::Award {
                uni,
                student,
                period,
                by,
                expect,
            } => {
                let u = tb.uni_index(uni)?;
                let op = RecordOp::UpdateProfile {
                    student_id: student.clone(),
                    field: "degreeAwarded".into(),
                    value: period.clone(),
                };
                check(expect, &tb.write_as(u, by, "PUT", "/profile", op, json!({})))
            }
            Action::Export {
                uni,
                student,
                courses,
                by,
                password,
                expect,
            } => {
                let u = tb.uni_index(uni)?;
                let pw = match password {
                    Some(p) => p.clone(),
                    None => tb.user(u, by)?.password.clone(),
                };
                let req = ApiRequest::post(
                    "/transcript/export",
                    json!({"password": pw, "studentId": student, "courseIds": courses}),
                );
                let r = tb.call_as(u, by, req);
                let status = check(expect, &r)?;
                match r.body["canonical"].as_str() {
                    Some(hex) if r.status == 200 => {
                        let bytes = hex::decode(hex).unwrap_or_default();
                        Ok(format!("{status} sha256={}", digest_sha256(&bytes).to_hex()))
                    }
                    _ => Ok(status),
                }
            }
            Action::Settle { max } => match tb.settle(*max) {
                Some(n) => Ok(format!("quiet after {n} ticks")),
                None => Err(Failure::new(format!("quiet within {max} ticks"), "still busy")),
            },
            Action::ClosePeriod { uni, period } => {
                let u = tb.uni_index(uni)?;
                let entry = {
                    let Testbed {
                        universities, ordering, ..
                    } = &mut *tb;
                    universities[u]
                        .hub
                        .close_period(ordering, period)
                        .map_err(|e| Failure::new("period closes", e.to_string()))?
                };
                match entry {
                    Some(e) => {
                        tb.deliver_entry(&e);
                        let n = match &e.payload {
                            Payload::Commitments(c) => c.len(),
                            _ => 0,
                        };
                        Ok(format!("entry #{} with {n} commitments", e.seq))
                    }
                    None => Ok("nothing to publish".into()),
                }
            }
            Action::Verify {
                uni,
                student,
                period,
                perturb,
                expect_verified,
            } => {
                let u = tb.uni_index(uni)?;
                let fields = published_transcript(tb, u, student, period)?;
                let fields = match perturb {
                    Some(p) => perturbed(&fields, *p),
                    None => fields,
                };
                let r = tb.call(u, ApiRequest::post("/verify", fields.to_json()));
                let got = r.body["status"].as_str().unwrap_or("error").to_owned();
                let want = if *expect_verified { "Verified" } else { "NotFound" };
                if got == want {
                    Ok(got)
                } else {
                    Err(Failure::new(want, format!("{} {}", r.status, r.body)))
                }
            }
            Action::Transfer {
                host,
                home,
                student,
                scope,
                tamper,
                expect_ok,
            } => transfer(tb, host, home, student, scope, *tamper, *expect_ok),
            Action::Audit {
                uni,
                tables,
                by,
                round,
                expect,
            } => {
                let u = tb.uni_index(uni)?;
                let mut body = json!({"tables": tables.iter().map(|t| t.name()).collect::<Vec<_>>()});
                if let Some(r) = round {
                    body["roundId"] = json!(r);
                }
                let r = tb.call_as(u, by, ApiRequest::post("/audit/run", body));
                let status = check(expect, &r)?;
                if r.status != 200 {
                    return Ok(status);
                }
                let round_id = r.body["roundId"].as_str().unwrap_or_default().to_owned();
                let reports: Vec<AuditReport> = tb.universities[u]
                    .gateway
                    .backend()
                    .reports
                    .round(&round_id)
                    .into_iter()
                    .cloned()
                    .collect();
                let mut divergent = BTreeSet::new();
                for rep in reports {
                    divergent.extend(rep.divergent_nodes.iter().cloned());
                    self.audits.push(audit_line(&rep));
                    self.last_audit.insert((u, rep.table), rep);
                }
                Ok(format!("round {round_id} divergent={divergent:?}"))
            }
            Action::Fault(kind) => {
                tb.inject_fault(FaultSpec {
                    kind: kind.clone(),
                    scheduled_at: tb.now(),
                })?;
                Ok("applied".into())
            }
            Action::Expect(e) => self.expect(e),
        }
    }

    fn expect(&self, e: &Expectation) -> Result<String, Failure> {
        let tb = &*self.tb;
        match e {
            Expectation::Consistent { uni } => {
                let unis: Vec<usize> = match uni {
                    Some(name) => vec![tb.uni_index(name)?],
                    None => (0..tb.universities.len()).collect(),
                };
                let mut problems = Vec::new();
                for u in unis {
                    let tips = tb.tips(u);
                    let distinct: BTreeSet<_> = tips.values().collect();
                    if distinct.len() > 1 {
                        problems.push(format!("tips differ: {tips:?}"));
                    }
                    for id in tips.keys() {
                        let live = tb.digests(u, id);
                        let replay = tb.replay_digests(u, id);
                        if live.is_none() || live != replay {
                            problems.push(format!("{id} live tables differ from replay of its chain"));
                        }
                    }
                }
                if problems.is_empty() {
                    Ok("tips agree, tables equal replay".into())
                } else {
                    Err(Failure::new("consistent", problems.join("; ")))
                }
            }
            Expectation::ChainValid => {
                let v = tb.chain_violations();
                if v.is_empty() {
                    Ok("0 violations".into())
                } else {
                    Err(Failure::new("0 violations", v.join("; ")))
                }
            }
            Expectation::Audit {
                table,
                divergent,
                rows,
                repairs,
                source,
                finding,
            } => {
                let rep = self
                    .last_audit
                    .iter()
                    .filter(|((_, t), _)| t == table)
                    .map(|(_, r)| r)
                    .last()
                    .ok_or_else(|| Failure::new(format!("an audit of {}", table.name()), "none ran"))?;
                let mut diffs = Vec::new();
                if let Some(d) = divergent {
                    let want: BTreeSet<String> = d.iter().cloned().collect();
                    if want != rep.divergent_nodes {
                        diffs.push(format!("divergent {want:?} vs {:?}", rep.divergent_nodes));
                    }
                }
                if let Some(rows) = rows {
                    let want: BTreeSet<String> = rows.iter().cloned().collect();
                    let got: BTreeSet<String> = rep
                        .localized_rows
                        .values()
                        .flatten()
                        .map(|r| r.row_key.to_string())
                        .collect();
                    if want != got {
                        diffs.push(format!("rows {want:?} vs {got:?}"));
                    }
                }
                if let Some(n) = repairs {
                    if *n != rep.repairs_applied {
                        diffs.push(format!("repairs {n} vs {}", rep.repairs_applied));
                    }
                }
                if let Some(s) = source {
                    if s != rep.adjudication_source.as_str() {
                        diffs.push(format!("source {s} vs {}", rep.adjudication_source.as_str()));
                    }
                }
                if let Some(f) = finding {
                    let got: Vec<String> = rep.findings.values().map(finding_name).collect();
                    if got.is_empty() || got.iter().any(|g| g != f) {
                        diffs.push(format!("finding {f} vs {got:?}"));
                    }
                }
                if diffs.is_empty() {
                    Ok(audit_line(rep))
                } else {
                    Err(Failure::new("audit report as scripted", diffs.join("; ")))
                }
            }
            Expectation::DigestsDiffer { uni, table } => {
                let u = tb.uni_index(uni)?;
                let digests: BTreeSet<_> = tb.universities[u]
                    .node_ids
                    .iter()
                    .filter_map(|id| tb.digests(u, id).map(|d| d[table]))
                    .collect();
                if digests.len() > 1 {
                    Ok(format!("{} distinct digests", digests.len()))
                } else {
                    Err(Failure::new("nodes disagree", "all digests equal"))
                }
            }
            Expectation::Grade {
                uni,
                student,
                course,
                term,
                score,
                node,
            } => {
                let u = tb.uni_index(uni)?;
                let key = RowKey::new([student.as_str(), course.as_str(), term.as_str()]);
                let ids: Vec<String> = match node {
                    Some(n) => vec![n.clone()],
                    None => tb.universities[u].node_ids.clone(),
                };
                let b = tb.universities[u].gateway.backend();
                for id in ids {
                    let n = b.node(&id).ok_or_else(|| Failure::from(SimError::UnknownTarget(id.clone())))?;
                    let got = n
                        .db()
                        .row(Table::Grades, &key)
                        .and_then(|r| r.get("score").and_then(Value::as_int))
                        .map(|s| s as u8);
                    if got != *score {
                        return Err(Failure::new(format!("{id} score {score:?}"), format!("{got:?}")));
                    }
                }
                Ok(format!("score {score:?}"))
            }
            Expectation::RepairOnChain { uni, count } => {
                let u = tb.uni_index(uni)?;
                let b = tb.universities[u].gateway.backend();
                let n = b
                    .nodes
                    .iter()
                    .find(|n| tb.is_live(n.id()))
                    .ok_or_else(|| Failure::new("a live node", "none"))?;
                let got = n
                    .chain()
                    .iter()
                    .flat_map(|blk| blk.txs.iter())
                    .filter(|tx| tx.op.kind() == OpKind::AuditRepair)
                    .count();
                if got == *count {
                    Ok(format!("{got} AuditRepair"))
                } else {
                    Err(Failure::new(format!("{count} AuditRepair"), got.to_string()))
                }
            }
            Expectation::Abstained { node } => {
                let hit = self.last_audit.values().any(|r| r.abstentions.contains(node));
                if hit {
                    Ok(format!("{node} abstained"))
                } else {
                    Err(Failure::new(format!("{node} abstains"), "voted or absent"))
                }
            }
            Expectation::AllIncluded => {
                let mut missing = 0;
                for (u, h) in &tb.submitted {
                    let b = tb.universities[*u].gateway.backend();
                    for n in b.nodes.iter().filter(|n| tb.is_live(n.id()) && !tb.lagging(n.id())) {
                        if n.inclusion_height(h).is_none() {
                            missing += 1;
                        }
                    }
                }
                if missing == 0 {
                    Ok(format!("{} transactions included", tb.submitted.len()))
                } else {
                    Err(Failure::new("every transaction included", format!("{missing} (node, tx) pairs missing")))
                }
            }
        }
    }
}

fn finding_name(f: &NodeFinding) -> String {
    match f {
        NodeFinding::Tampered => "Tampered".into(),
        NodeFinding::MissingBlocks(_) => "MissingBlocks".into(),
    }
}

fn audit_line(r: &AuditReport) -> String {
    let rows: Vec<String> = r
        .localized_rows
        .iter()
        .flat_map(|(n, rows)| rows.iter().map(move |x| format!("{n}:{}", x.row_key)))
        .collect();
    let findings: Vec<String> = r
        .findings
        .iter()
        .map(|(n, f)| match f {
            NodeFinding::Tampered => format!("{n}=Tampered"),
            NodeFinding::MissingBlocks(k) => format!("{n}=MissingBlocks({k})"),
        })
        .collect();
    format!(
        "{} {} consensus={} source={} votes={} abstained={:?} divergent={:?} findings={findings:?} rows={rows:?} repairs={} levels={}",
        r.round_id,
        r.table.name(),
        r.consensus_digest.to_hex(),
        r.adjudication_source.as_str(),
        r.votes.len(),
        r.abstentions,
        r.divergent_nodes,
        r.repairs_applied,
        r.narrowing_levels
    )
}

/// The transcript credential `uni` published for `student` in `period`.
pub fn published_transcript(tb: &Testbed, uni: usize, student: &str, period: &str) -> Result<Fields, Failure> {
    tb.universities[uni]
        .hub
        .published()
        .get(period)
        .and_then(|creds| {
            creds.iter().find(|c| {
                c.record.subject_id == student && c.record.credential_type == CredentialType::Transcript
            })
        })
        .map(|c| c.fields.clone())
        .ok_or_else(|| Failure::new(format!("a published {period} transcript for {student}"), "none"))
}

/// `fields` with one value changed as `p` says.
pub fn perturbed(fields: &Fields, p: Perturb) -> Fields {
    let mut out = fields.clone();
    match p {
        Perturb::ScoreUp | Perturb::ScoreDown => {
            let (name, score) = fields
                .iter()
                .find(|(k, _)| k.ends_with(".score"))
                .map(|(k, v)| (k.clone(), v.as_int().unwrap_or(0)))
                .expect("a transcript has a score");
            let next = match (p, score) {
                (Perturb::ScoreUp, 100) | (Perturb::ScoreDown, _) if score > 0 => score - 1,
                _ => score + 1,
            };
            out.insert(name, Value::Int(next));
        }
        Perturb::Name => {
            let name = fields.get("name").and_then(Value::as_str).unwrap_or_default();
            out.insert("name", format!("{name}e"));
        }
        Perturb::Period => {
            let period = fields.get("period").and_then(Value::as_str).unwrap_or_default();
            let (year, season) = period.split_once('-').unwrap_or((period, "Fall"));
            let year: i64 = year.parse().unwrap_or(2000);
            out.insert("period", format!("{}-{season}", year + 1));
        }
    }
    out
}

fn transfer(
    tb: &mut Testbed,
    host: &str,
    home: &str,
    student: &str,
    scope: &str,
    tamper: bool,
    expect_ok: bool,
) -> Result<String, Failure> {
    let h = tb.uni_index(host)?;
    let m = tb.uni_index(home)?;
    let channel = tb.next_channel();
    let home_id = tb.universities[m].member.clone();
    let request = {
        let Testbed {
            universities, ordering, ..
        } = &mut *tb;
        universities[h]
            .hub
            .request_transfer(ordering, &channel, &home_id, student, scope)
            .map_err(|e| Failure::new("request sequenced", e.to_string()))?
    };
    tb.deliver_entry(&request);
    let response = {
        let mut rng = tb.rng().clone();
        let r = {
            let Testbed {
                universities, ordering, ..
            } = &mut *tb;
            universities[m].hub.service_transfer(ordering, &channel, &mut rng)
        };
        *tb.rng() = rng;
        r.map_err(|e| Failure::new("response sequenced", e.to_string()))?
    };
    tb.deliver_entry(&response);
    let Payload::TransferResponse(mut resp) = response.payload else {
        return Err(Failure::new("a TransferResponse entry", response.payload.kind()));
    };
    let hub = &tb.universities[h].hub;
    let received = if tamper {
        let mid = resp.payload.len() / 2;
        resp.payload[mid] ^= 0x01;
        hub.receive_response(&resp)
    } else {
        hub.receive_transfer(&channel)
    };
    match (received, expect_ok) {
        (Ok(plain), true) => {
            let digest = digest_sha256(&plain);
            let commitment = hub
                .log()
                .lookup_commitment(student, CredentialType::Transcript, scope, &home_id)
                .map(|c| c.digest);
            if digest == resp.payload_digest && Some(digest) == commitment {
                Ok(format!("{channel} digest={} matches payloadDigest and commitment", digest.to_hex()))
            } else {
                Err(Failure::new(
                    "plaintext digest == payloadDigest == commitment",
                    format!(
                        "plaintext {} payloadDigest {} commitment {:?}",
                        digest.to_hex(),
                        resp.payload_digest.to_hex(),
                        commitment.map(|c| c.to_hex())
                    ),
                ))
            }
        }
        (Err(TransferError::DigestMismatch(which)), false) => Ok(format!("{channel} DigestMismatch({which:?})")),
        (got, true) => Err(Failure::new("ok", format!("{:?}", got.map(|p| p.len())))),
        (got, false) => Err(Failure::new("DigestMismatch", format!("{:?}", got.map(|p| p.len())))),
    }
}

/// Builds a testbed from `cfg` with the scenario's overrides, then runs it.
pub fn run_scenario(mut cfg: crate::config::NetworkConfig, scenario: &Scenario) -> Result<(RunReport, Testbed), SimError> {
    let seed = cfg.seed;
    for (k, v) in &scenario.config {
        cfg.set(k, v)?;
    }
    cfg.seed = seed;
    cfg.validate()?;
    let mut tb = Testbed::build(cfg)?;
    let report = Runner::new(&mut tb).run(scenario);
    Ok((report, tb))
}
