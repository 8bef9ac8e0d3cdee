//! Transport-independent request handling.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Mutex, MutexGuard};

use educhain_core::chain::Decision;
use educhain_core::hash::digest_sha256;
use educhain_core::hub::Verification;
use educhain_core::record::OpKind;
use educhain_core::store::schema::Table;
use educhain_core::store::{LogContext, StoreError};
use educhain_core::{AccountId, Canonical, Fields, Hash256, PrivateNode, RecordOp, Transaction, TxRejection, Value};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::Deserialize;
use serde_json::{json, Value as Json};

use crate::auth::{AuthError, PasswordStore, Session, SessionStore, DEFAULT_LOCKOUT_THRESHOLD};
use crate::authz::{access, Access, Endpoint, Principal};
use crate::backend::Backend;
use crate::route::{RouteError, RouteTable, Routed};

pub const DEFAULT_SESSION_TTL: u64 = 3600;
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct ApiRequest {
    pub method: String,
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub token: Option<String>,
    pub department: Option<String>,
    pub body: Json,
}

impl ApiRequest {
    /// `target` may carry a `?a=b&c=d` query; values are taken verbatim.
    pub fn new(method: &str, target: &str) -> Self {
        let (path, query) = match target.split_once('?') {
            Some((p, q)) => (p, q),
            None => (target, ""),
        };
        let query = query
            .split('&')
            .filter(|kv| !kv.is_empty())
            .map(|kv| match kv.split_once('=') {
                Some((k, v)) => (k.to_owned(), v.to_owned()),
                None => (kv.to_owned(), String::new()),
            })
            .collect();
        ApiRequest {
            method: method.to_owned(),
            path: path.to_owned(),
            query,
            token: None,
            department: None,
            body: Json::Null,
        }
    }

    pub fn get(target: &str) -> Self {
        Self::new("GET", target)
    }

    pub fn post(target: &str, body: Json) -> Self {
        Self::new("POST", target).body(body)
    }

    pub fn put(target: &str, body: Json) -> Self {
        Self::new("PUT", target).body(body)
    }

    pub fn body(mut self, body: Json) -> Self {
        self.body = body;
        self
    }

    pub fn token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn department(mut self, dept: impl Into<String>) -> Self {
        self.department = Some(dept.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Json,
}

impl ApiResponse {
    pub fn ok(body: Json) -> Self {
        ApiResponse { status: 200, body }
    }

    /// Machine-readable error code, if this is an error response.
    pub fn code(&self) -> Option<&str> {
        self.body.get("error")?.get("code")?.as_str()
    }
}

/// An error response: HTTP status plus a stable code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(422, code, message)
    }

    fn forbidden(message: impl Into<String>) -> Self {
        Self::new(403, "Forbidden", message)
    }

    fn into_response(self) -> ApiResponse {
        ApiResponse {
            status: self.status,
            body: json!({"error": {"code": self.code, "message": self.message}}),
        }
    }
}

impl From<TxRejection> for ApiError {
    fn from(e: TxRejection) -> Self {
        let msg = e.to_string();
        match e {
            TxRejection::BadNonce { .. } => ApiError::new(409, "BadNonce", msg),
            TxRejection::PermissionDenied(_) => ApiError::new(403, "PermissionDenied", msg),
            TxRejection::UnknownAccount => ApiError::new(403, "UnknownAccount", msg),
            TxRejection::BadSignature => ApiError::unprocessable("BadSignature", msg),
            TxRejection::InvalidOp(_) => ApiError::unprocessable("InvalidOperation", msg),
            TxRejection::DuplicateAccount => ApiError::new(409, "DuplicateAccount", msg),
            TxRejection::MempoolFull => ApiError::new(503, "MempoolFull", msg),
            TxRejection::ReadOnlyNode => ApiError::new(503, "ReadOnlyNode", msg),
        }
    }
}

impl From<RouteError> for ApiError {
    fn from(e: RouteError) -> Self {
        ApiError::new(503, "NoNodeAvailable", e.to_string())
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        match e {
            AuthError::BadCredentials => ApiError::new(401, "BadCredentials", "bad credentials"),
            AuthError::AccountLocked => ApiError::new(423, "AccountLocked", "account locked"),
        }
    }
}

type ApiResult = Result<Json, ApiError>;

#[derive(Clone, Debug)]
pub struct GatewaySettings {
    pub session_ttl: u64,
    pub lockout_threshold: u32,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        GatewaySettings {
            session_ttl: DEFAULT_SESSION_TTL,
            lockout_threshold: DEFAULT_LOCKOUT_THRESHOLD,
        }
    }
}

/// The gateway. All state sits behind mutexes so one instance can serve
/// concurrent connections; backend access is serialized, which also keeps
/// each account's writes in nonce order.
pub struct Gateway<B: Backend> {
    backend: Mutex<B>,
    routes: RouteTable,
    passwords: Mutex<PasswordStore>,
    sessions: Mutex<SessionStore>,
    rng: Mutex<StdRng>,
    settings: GatewaySettings,
    rounds: Mutex<u64>,
}

#[derive(Deserialize)]
struct Login {
    #[serde(rename = "accountId")]
    account_id: String,
    password: String,
}

#[derive(Deserialize)]
struct SignedWrite {
    tx: Transaction,
}

#[derive(Deserialize)]
struct NewAccount {
    tx: Transaction,
    password: String,
}

#[derive(Deserialize)]
struct Attachment {
    tx: Transaction,
    /// Hex-encoded file bytes.
    content: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Export {
    password: String,
    student_id: Option<String>,
    course_ids: BTreeSet<String>,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "camelCase")]
struct AuditRun {
    tables: Option<Vec<Table>>,
    round_id: Option<String>,
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Json) -> Result<T, ApiError> {
    serde_json::from_value(body.clone()).map_err(|e| ApiError::unprocessable("SchemaViolation", e.to_string()))
}

impl<B: Backend> Gateway<B> {
    /// `seed` fixes token and salt generation; `None` seeds from the OS.
    pub fn new(backend: B, routes: RouteTable, settings: GatewaySettings, seed: Option<u64>) -> Self {
        let rng = match seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_entropy(),
        };
        Gateway {
            backend: Mutex::new(backend),
            routes,
            passwords: Mutex::new(PasswordStore::new(settings.lockout_threshold)),
            sessions: Mutex::new(SessionStore::default()),
            rng: Mutex::new(rng),
            settings,
            rounds: Mutex::new(0),
        }
    }

    pub fn backend(&self) -> MutexGuard<'_, B> {
        self.backend.lock().unwrap()
    }

    pub fn routes(&self) -> &RouteTable {
        &self.routes
    }

    /// Provisions a password for an account registered on chain.
    pub fn set_password(&self, account: AccountId, password: &str) {
        let mut rng = self.rng.lock().unwrap();
        self.passwords.lock().unwrap().set_password(&mut *rng, account, password);
    }

    pub fn handle(&self, req: &ApiRequest) -> ApiResponse {
        match self.dispatch(req) {
            Ok(body) => ApiResponse::ok(body),
            Err(e) => e.into_response(),
        }
    }

    fn dispatch(&self, req: &ApiRequest) -> ApiResult {
        let Some((endpoint, param)) = Endpoint::resolve(&req.method, &req.path) else {
            return Err(if Endpoint::path_known(&req.path) {
                ApiError::new(405, "MethodNotAllowed", format!("{} {}", req.method, req.path))
            } else {
                ApiError::new(404, "UnknownEndpoint", req.path.clone())
            });
        };
        let now = self.backend().now();
        let session = req
            .token
            .as_deref()
            .and_then(|t| self.sessions.lock().unwrap().get(t, now));
        let who = session
            .as_ref()
            .map_or(Principal::Anonymous, |s| Principal::User(s.role));
        let grant = access(endpoint, who);
        if grant == Access::Deny {
            return Err(match who {
                Principal::Anonymous => ApiError::new(401, "Unauthenticated", "a valid session is required"),
                Principal::User(role) => {
                    ApiError::forbidden(format!("{} may not call {} {}", role, endpoint.method(), endpoint.path()))
                }
            });
        }
        let dept = req.department.as_deref();
        match (endpoint, session) {
            (Endpoint::Login, _) => self.login(req, now),
            (Endpoint::Verify, _) => self.verify(req),
            (_, None) => Err(ApiError::new(401, "Unauthenticated", "a valid session is required")),
            (Endpoint::Logout, Some(s)) => {
                self.sessions.lock().unwrap().revoke(&s.token);
                Ok(json!({"loggedOut": true}))
            }
            (Endpoint::GetAccount, Some(s)) => self.get_account(&s, dept),
            (Endpoint::GetProfile, Some(s)) => self.get_profile(req, &s, grant, dept),
            (Endpoint::PutProfile, Some(s)) => self.write(req, &s, dept, OpKind::UpdateProfile),
            (Endpoint::GetGrades, Some(s)) => self.get_grades(req, &s, grant, dept),
            (Endpoint::PostGrades, Some(s)) => self.write(req, &s, dept, OpKind::UpsertGrade),
            (Endpoint::PostAttachments, Some(s)) => self.attach(req, &s, dept),
            (Endpoint::ExportTranscript, Some(s)) => self.export(req, &s, grant, dept, now),
            (Endpoint::GetOplog, Some(s)) => self.oplog(req, &s, grant, dept),
            (Endpoint::GetTx, Some(_)) => self.tx_status(param.as_deref().unwrap_or_default(), dept),
            (Endpoint::PostAccounts, Some(s)) => self.register_account(req, &s, dept),
            (Endpoint::PostStudents, Some(s)) => self.write(req, &s, dept, OpKind::RegisterStudent),
            (Endpoint::PostCourses, Some(s)) => self.write(req, &s, dept, OpKind::RegisterCourse),
            (Endpoint::RunAudit, Some(_)) => self.run_audit(req, now),
            (Endpoint::GetAuditReports, Some(_)) => self.audit_reports(req),
        }
    }

    fn route(&self, backend: &B, dept: Option<&str>) -> Result<Routed, ApiError> {
        Ok(self.routes.route(dept, |n| backend.is_up(n))?)
    }

    fn login(&self, req: &ApiRequest, now: u64) -> ApiResult {
        let body: Login = parse(&req.body)?;
        let account = AccountId::from_hex(&body.account_id);
        let checked = match account {
            Some(a) => self.passwords.lock().unwrap().check(&a, &body.password),
            None => Err(AuthError::BadCredentials),
        };
        checked?;
        let account = account.expect("checked above");
        let backend = self.backend();
        let routed = self.route(&backend, req.department.as_deref())?;
        let node = backend.node(&routed.node).expect("routed node exists");
        let record = node
            .state()
            .account(&account)
            .cloned()
            .ok_or_else(|| ApiError::from(AuthError::BadCredentials))?;
        drop(backend);
        let mut rng = self.rng.lock().unwrap();
        let session = self.sessions.lock().unwrap().issue(
            &mut *rng,
            account,
            record.role,
            record.subject_id.clone(),
            now + self.settings.session_ttl,
        );
        Ok(json!({
            "token": session.token,
            "accountId": account.to_hex(),
            "role": record.role.as_str(),
            "subjectId": record.subject_id,
            "expiresAt": session.expiry,
        }))
    }

    /// Target student of a read or export; `Own` pins it to the caller.
    fn subject(&self, requested: Option<&str>, s: &Session, grant: Access) -> Result<Option<String>, ApiError> {
        match (grant, requested) {
            (Access::Own, Some(id)) if id != s.subject_id => {
                Err(ApiError::forbidden("students may only access their own records"))
            }
            (Access::Own, _) => Ok(Some(s.subject_id.clone())),
            (_, r) => Ok(r.map(str::to_owned)),
        }
    }

    fn get_account(&self, s: &Session, dept: Option<&str>) -> ApiResult {
        let backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node = backend.node(&routed.node).expect("routed node exists");
        Ok(json!({
            "accountId": s.account.to_hex(),
            "role": s.role.as_str(),
            "subjectId": s.subject_id,
            "nextNonce": node.next_nonce(&s.account),
            "node": routed.node,
            "failover": routed.failover,
        }))
    }

    fn get_profile(&self, req: &ApiRequest, s: &Session, grant: Access, dept: Option<&str>) -> ApiResult {
        let student = self
            .subject(req.query.get("studentId").map(String::as_str), s, grant)?
            .ok_or_else(|| ApiError::unprocessable("SchemaViolation", "studentId is required"))?;
        let backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node = backend.node(&routed.node).expect("routed node exists");
        let rows = node
            .db()
            .query("students", &[("studentId", &student)])
            .map_err(|e| ApiError::unprocessable("SchemaViolation", e.to_string()))?;
        let row = rows
            .first()
            .ok_or_else(|| ApiError::new(404, "UnknownStudent", student.clone()))?;
        Ok(json!({"profile": row.to_json(), "node": routed.node, "failover": routed.failover}))
    }

    fn get_grades(&self, req: &ApiRequest, s: &Session, grant: Access, dept: Option<&str>) -> ApiResult {
        let student = self.subject(req.query.get("studentId").map(String::as_str), s, grant)?;
        let mut predicate: Vec<(&str, &str)> = Vec::new();
        if let Some(id) = &student {
            predicate.push(("studentId", id));
        }
        for f in ["courseId", "term"] {
            if let Some(v) = req.query.get(f) {
                predicate.push((f, v));
            }
        }
        let backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node = backend.node(&routed.node).expect("routed node exists");
        let rows = node
            .db()
            .query("grades", &predicate)
            .map_err(|e| ApiError::unprocessable("SchemaViolation", e.to_string()))?;
        Ok(json!({
            "rows": rows.iter().map(Fields::to_json).collect::<Vec<_>>(),
            "summary": term_summary(&rows),
            "node": routed.node,
            "failover": routed.failover,
        }))
    }

    fn oplog(&self, req: &ApiRequest, s: &Session, grant: Access, dept: Option<&str>) -> ApiResult {
        let num = |k: &str, d: usize| -> Result<usize, ApiError> {
            req.query.get(k).map_or(Ok(d), |v| {
                v.parse()
                    .map_err(|_| ApiError::unprocessable("SchemaViolation", format!("{k} must be a number")))
            })
        };
        let page = num("page", 0)?;
        let size = num("pageSize", DEFAULT_PAGE_SIZE)?.clamp(1, MAX_PAGE_SIZE);
        let backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node = backend.node(&routed.node).expect("routed node exists");
        let entries: Vec<_> = node
            .db()
            .op_log()
            .iter()
            .filter(|e| grant != Access::Own || e.actor == s.account)
            .collect();
        let total = entries.len();
        let slice: Vec<_> = entries.into_iter().skip(page * size).take(size).collect();
        Ok(json!({
            "entries": slice,
            "total": total,
            "page": page,
            "pageSize": size,
            "node": routed.node,
            "failover": routed.failover,
        }))
    }

    fn tx_status(&self, hash: &str, dept: Option<&str>) -> ApiResult {
        let hash = Hash256::from_hex(hash).map_err(|e| ApiError::unprocessable("SchemaViolation", e.to_string()))?;
        let backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node = backend.node(&routed.node).expect("routed node exists");
        if let Some(h) = node.inclusion_height(&hash) {
            return Ok(json!({"txHash": hash.to_hex(), "status": "included", "blockNumber": h}));
        }
        let pending = backend
            .node_ids()
            .iter()
            .filter_map(|id| backend.node(id))
            .any(|n| n.mempool().iter().any(|t| t.hash() == hash));
        if pending {
            Ok(json!({"txHash": hash.to_hex(), "status": "pending"}))
        } else {
            Err(ApiError::new(404, "UnknownTx", hash.to_hex()))
        }
    }

    /// Checks a client-signed transaction and hands it to the routed node.
    /// Nothing reaches a mempool unless every check passes.
    fn submit(&self, tx: Transaction, s: &Session, dept: Option<&str>, kind: OpKind) -> Result<(Routed, Hash256), ApiError> {
        if tx.op.kind() != kind {
            return Err(ApiError::unprocessable(
                "WrongOperation",
                format!("expected {kind}, got {}", tx.op.kind()),
            ));
        }
        if tx.sender != s.account {
            return Err(ApiError::forbidden("transaction sender is not the session account"));
        }
        if !tx.signature_valid() {
            return Err(ApiError::unprocessable("BadSignature", "signature does not verify"));
        }
        let mut backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node = backend.node_mut(&routed.node).expect("routed node exists");
        if let Decision::Deny(reason) = node.check_permission(&tx.sender, &tx.op)? {
            return Err(ApiError::new(403, "PermissionDenied", reason));
        }
        let hash = node.submit_transaction(tx)?;
        Ok((routed, hash))
    }

    fn write(&self, req: &ApiRequest, s: &Session, dept: Option<&str>, kind: OpKind) -> ApiResult {
        let body: SignedWrite = parse(&req.body)?;
        let (routed, hash) = self.submit(body.tx, s, dept, kind)?;
        Ok(json!({"txHash": hash.to_hex(), "node": routed.node, "failover": routed.failover}))
    }

    fn attach(&self, req: &ApiRequest, s: &Session, dept: Option<&str>) -> ApiResult {
        let body: Attachment = parse(&req.body)?;
        let content =
            hex::decode(&body.content).map_err(|e| ApiError::unprocessable("SchemaViolation", e.to_string()))?;
        let RecordOp::AttachFile { cid, size, .. } = &body.tx.op else {
            return Err(ApiError::unprocessable("WrongOperation", "expected AttachFile"));
        };
        if *cid != digest_sha256(&content) || *size != content.len() as u64 {
            return Err(ApiError::unprocessable(
                "ContentMismatch",
                "cid and size must describe the uploaded content",
            ));
        }
        let cid = *cid;
        let (routed, hash) = self.submit(body.tx, s, dept, OpKind::AttachFile)?;
        // content-addressed, so writing after acceptance is idempotent
        self.backend()
            .node_mut(&routed.node)
            .expect("routed node exists")
            .content_mut()
            .put(&content);
        Ok(json!({"txHash": hash.to_hex(), "cid": cid.to_hex(), "node": routed.node, "failover": routed.failover}))
    }

    fn register_account(&self, req: &ApiRequest, s: &Session, dept: Option<&str>) -> ApiResult {
        let body: NewAccount = parse(&req.body)?;
        if body.password.is_empty() {
            return Err(ApiError::unprocessable("SchemaViolation", "password must not be empty"));
        }
        let RecordOp::RegisterAccount { public_key, .. } = &body.tx.op else {
            return Err(ApiError::unprocessable("WrongOperation", "expected RegisterAccount"));
        };
        let account = public_key.account_id();
        let (routed, hash) = self.submit(body.tx, s, dept, OpKind::RegisterAccount)?;
        self.set_password(account, &body.password);
        Ok(json!({
            "txHash": hash.to_hex(),
            "accountId": account.to_hex(),
            "node": routed.node,
            "failover": routed.failover,
        }))
    }

    fn export(&self, req: &ApiRequest, s: &Session, grant: Access, dept: Option<&str>, now: u64) -> ApiResult {
        let body: Export = parse(&req.body)?;
        self.passwords.lock().unwrap().check(&s.account, &body.password)?;
        let student = self
            .subject(body.student_id.as_deref(), s, grant)?
            .ok_or_else(|| ApiError::unprocessable("SchemaViolation", "studentId is required"))?;
        let mut backend = self.backend();
        let routed = self.route(&backend, dept)?;
        let node: &mut PrivateNode = backend.node_mut(&routed.node).expect("routed node exists");
        let ctx = LogContext {
            actor: s.account,
            time: now,
            block_number: node.height(),
        };
        let doc = node
            .db_mut()
            .export_transcript(&student, &body.course_ids, ctx)
            .map_err(|e| match e {
                StoreError::UnknownStudent(id) => ApiError::new(404, "UnknownStudent", id),
                other => ApiError::unprocessable("SchemaViolation", other.to_string()),
            })?;
        Ok(json!({
            "transcript": doc,
            "canonical": hex::encode(doc.canonical_bytes()),
            "node": routed.node,
            "failover": routed.failover,
        }))
    }

    fn verify(&self, req: &ApiRequest) -> ApiResult {
        let fields = Fields::from_json_scalars(&req.body)
            .map_err(|e| ApiError::unprocessable("SchemaViolation", e.to_string()))?;
        match self.backend().verify(&fields) {
            None => Err(ApiError::new(503, "VerifierUnavailable", "no consortium view configured")),
            Some(Verification::Verified { issuer, seq }) => Ok(json!({
                "status": "Verified",
                "issuer": issuer.org,
                "issuerAccount": issuer.account.to_hex(),
                "seq": seq,
            })),
            Some(Verification::NotFound) => Ok(json!({"status": "NotFound"})),
        }
    }

    fn run_audit(&self, req: &ApiRequest, now: u64) -> ApiResult {
        let body: AuditRun = if req.body.is_null() { AuditRun::default() } else { parse(&req.body)? };
        let tables = body.tables.unwrap_or_else(|| Table::ALL.to_vec());
        let round_id = body.round_id.unwrap_or_else(|| {
            let mut n = self.rounds.lock().unwrap();
            *n += 1;
            format!("round-{now}-{n}")
        });
        let reports = self.backend().run_audit(&tables, &round_id).map_err(|e| {
            use educhain_core::audit::AuditError::*;
            match e {
                RoundInProgress(_) => ApiError::new(409, "RoundInProgress", e.to_string()),
                NoNodesReachable | ChainUnavailable => ApiError::new(503, "AuditUnavailable", e.to_string()),
                other => ApiError::unprocessable("AuditFailed", other.to_string()),
            }
        })?;
        Ok(json!({"roundId": round_id, "reports": reports_json(&reports)}))
    }

    fn audit_reports(&self, req: &ApiRequest) -> ApiResult {
        let reports: Vec<_> = self
            .backend()
            .audit_reports()
            .into_iter()
            .filter(|r| req.query.get("roundId").map_or(true, |id| &r.round_id == id))
            .collect();
        Ok(json!({"reports": reports_json(&reports)}))
    }
}

fn reports_json(reports: &[educhain_core::audit::AuditReport]) -> Vec<Json> {
    reports
        .iter()
        .map(|r| {
            let mut j = serde_json::to_value(r).expect("report serializes");
            j["canonical"] = Json::String(hex::encode(r.canonical_bytes()));
            j
        })
        .collect()
}

/// Per-term score summaries of grade rows: count, mean, min and max.
pub fn term_summary(rows: &[Fields]) -> Vec<Json> {
    let mut by_term: BTreeMap<String, Vec<i128>> = BTreeMap::new();
    for r in rows {
        let term = r.get("term").map(Value::render).unwrap_or_default();
        if let Some(score) = r.get("score").and_then(Value::as_int) {
            by_term.entry(term).or_default().push(score);
        }
    }
    by_term
        .into_iter()
        .map(|(term, scores)| {
            let sum: i128 = scores.iter().sum();
            let mean = (sum as f64 / scores.len() as f64 * 100.0).round() / 100.0;
            json!({
                "term": term,
                "courses": scores.len(),
                "meanScore": mean,
                "minScore": scores.iter().min(),
                "maxScore": scores.iter().max(),
            })
        })
        .collect()
}
