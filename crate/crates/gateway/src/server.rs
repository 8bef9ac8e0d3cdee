//! HTTP transport over [`Gateway::handle`].
//!
//! The session token travels as `Authorization: Bearer <hex>`, the target
//! department as `X-Department`. Bodies are JSON; an empty body is `null`.

use std::io::Read;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Value as Json};
use tiny_http::{Header, Method, Request, Response, Server};

use crate::api::{ApiRequest, ApiResponse, Gateway};
use crate::backend::Backend;

pub const MAX_BODY_BYTES: u64 = 16 << 20;

fn header(req: &Request, name: &'static str) -> Option<String> {
    req.headers()
        .iter()
        .find(|h| h.field.equiv(name))
        .map(|h| h.value.as_str().to_owned())
}

fn to_api(req: &mut Request) -> Result<ApiRequest, ApiResponse> {
    let method = match req.method() {
        Method::Get => "GET",
        Method::Post => "POST",
        Method::Put => "PUT",
        other => other.as_str(),
    }
    .to_owned();
    let mut raw = Vec::new();
    req.as_reader()
        .take(MAX_BODY_BYTES)
        .read_to_end(&mut raw)
        .map_err(|e| bad_request(e.to_string()))?;
    let body = if raw.iter().all(u8::is_ascii_whitespace) {
        Json::Null
    } else {
        serde_json::from_slice(&raw).map_err(|e| bad_request(e.to_string()))?
    };
    let mut api = ApiRequest::new(&method, req.url()).body(body);
    api.token = header(req, "Authorization").and_then(|v| v.strip_prefix("Bearer ").map(str::to_owned));
    api.department = header(req, "X-Department");
    Ok(api)
}

fn bad_request(message: String) -> ApiResponse {
    ApiResponse {
        status: 400,
        body: json!({"error": {"code": "BadRequest", "message": message}}),
    }
}

fn respond(req: Request, resp: ApiResponse) {
    let content_type = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let out = Response::from_string(resp.body.to_string())
        .with_status_code(resp.status)
        .with_header(content_type);
    let _ = req.respond(out);
}

pub fn serve_one<B: Backend>(gateway: &Gateway<B>, mut req: Request) {
    let resp = match to_api(&mut req) {
        Ok(api) => gateway.handle(&api),
        Err(resp) => resp,
    };
    respond(req, resp);
}

/// Serves `gateway` on `server` with `workers` threads until the server is unblocked.
pub fn spawn<B: Backend + 'static>(gateway: Arc<Gateway<B>>, server: Arc<Server>, workers: usize) -> Vec<JoinHandle<()>> {
    (0..workers.max(1))
        .map(|_| {
            let gateway = Arc::clone(&gateway);
            let server = Arc::clone(&server);
            std::thread::spawn(move || {
                for req in server.incoming_requests() {
                    serve_one(&gateway, req);
                }
            })
        })
        .collect()
}
