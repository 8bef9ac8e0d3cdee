mod common;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use common::*;
use educhain_gateway::server;
use serde_json::{json, Value as Json};

fn send(addr: &str, method: &str, path: &str, headers: &[(&str, &str)], body: &str) -> (u16, Json) {
    let mut s = TcpStream::connect(addr).unwrap();
    let mut req = format!("{method} {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Length: {}\r\n", body.len());
    for (k, v) in headers {
        req.push_str(&format!("{k}: {v}\r\n"));
    }
    req.push_str("\r\n");
    req.push_str(body);
    s.write_all(req.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    let status = out[9..12].parse().unwrap();
    let body = out.split_once("\r\n\r\n").unwrap().1;
    (status, serde_json::from_str(body).unwrap())
}

#[test]
fn serves_json_over_http() {
    let f = fixture(0);
    let alice = f.keys.alice.account_id().to_hex();
    let gw = Arc::new(f.gw);
    let srv = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let addr = srv.server_addr().to_ip().unwrap().to_string();
    let workers = server::spawn(Arc::clone(&gw), Arc::clone(&srv), 2);

    let (status, body) = send(&addr, "POST", "/login", &[], &json!({"accountId": alice, "password": PW}).to_string());
    assert_eq!(status, 200);
    let token = body["token"].as_str().unwrap().to_owned();
    let auth = format!("Bearer {token}");

    let (status, body) = send(&addr, "GET", "/grades", &[("Authorization", &auth), ("X-Department", "cs")], "");
    assert_eq!(status, 200);
    assert_eq!(body["node"], "n2");
    assert_eq!(body["rows"][0]["studentId"], "S1");

    let (status, body) = send(&addr, "GET", "/grades", &[], "");
    assert_eq!((status, body["error"]["code"].as_str()), (401, Some("Unauthenticated")));

    let (status, body) = send(&addr, "POST", "/verify", &[], "{not json");
    assert_eq!((status, body["error"]["code"].as_str()), (400, Some("BadRequest")));

    srv.unblock();
    srv.unblock();
    for w in workers {
        w.join().unwrap();
    }
}
