//! The live service over a real WebSocket connection.

mod common;

use std::net::TcpStream;
use std::time::{Duration, Instant};

use cuelayer::analysis::Models;
use cuelayer::config::Resources;
use cuelayer::record::{read_file, RecordKind, SessionLog};
use cuelayer::replay::ReplayClock;
use cuelayer::service::{prepare_replay, start, ServiceOptions};
use cuelayer::sim::simulate;
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn connect(addr: std::net::SocketAddr) -> Client {
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    if let MaybeTlsStream::Plain(s) = ws.get_ref() {
        s.set_read_timeout(Some(Duration::from_millis(50))).unwrap();
    }
    ws
}

/// Reads messages until `done` accepts one, returning everything read.
fn read_until(ws: &mut Client, done: impl Fn(&Value) -> bool) -> Vec<Value> {
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut seen = Vec::new();
    while Instant::now() < deadline {
        match ws.read() {
            Ok(Message::Text(t)) => {
                let v: Value = serde_json::from_str(&t).unwrap();
                assert_eq!(v["v"], 1, "{v}");
                let stop = done(&v);
                seen.push(v);
                if stop {
                    return seen;
                }
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => panic!("{e}"),
        }
    }
    panic!("timed out; saw {seen:?}");
}

fn is_reply(v: &Value, id: &Value) -> bool {
    (v["type"] == "ack" || v["type"] == "error") && &v["id"] == id
}

fn command(ws: &mut Client, id: i64, kind: &str, payload: Value) -> (Value, Vec<Value>) {
    ws.send(Message::Text(json!({"v": 1, "type": kind, "id": id, "payload": payload}).to_string()))
        .unwrap();
    let id = json!(id);
    let seen = read_until(ws, |v| is_reply(v, &id));
    let reply = seen.last().unwrap().clone();
    (reply, seen)
}

#[test]
fn duplex_session_over_websocket() {
    let res = Resources::bundled().unwrap();
    let sim = simulate(&common::short_session(), &res.taxonomy).unwrap();
    let source = prepare_replay(
        SessionLog::from_records(sim.records.clone()),
        ReplayClock::batch(),
        &common::short_analysis(),
        &res.config.interpreter,
        &res.taxonomy,
        &Models::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("service.jsonl");
    let handle = start(ServiceOptions {
        bind: "127.0.0.1:0".parse().unwrap(),
        feature_rate_hz: 10.0,
        interpreter: res.config.interpreter.clone(),
        table: res.table.clone(),
        context: sim.truth.context.clone(),
        risk_step_s: 0.25,
        log_path: Some(log_path.clone()),
        replay: Some(source),
    })
    .unwrap();
    handle.wait_for_replay();

    let mut ws = connect(handle.local_addr());
    let first = read_until(&mut ws, |v| v["type"] == "state");
    assert_eq!(first.len(), 1);

    // Malformed JSON: error reply without an id, connection kept.
    ws.send(Message::Text("{\"v\": 1, \"type\": ".into())).unwrap();
    let seen = read_until(&mut ws, |v| v["type"] == "error");
    assert_eq!(seen.last().unwrap()["payload"]["code"], "bad_request");

    let (state, _) = command(&mut ws, 1, "get_state", json!({}));
    assert_eq!(state["type"], "ack");
    let proposals = state["payload"]["result"]["proposals"].as_array().unwrap().clone();
    assert!(!proposals.is_empty(), "no proposals from the escalation segment");
    let pending = proposals
        .iter()
        .find(|p| p["status"] == "pending")
        .expect("a pending proposal");
    let pid = pending["id"].as_str().unwrap().to_string();

    let (ack, seen) = command(&mut ws, 2, "approve", json!({"proposal_id": pid, "actor": "trainer-1"}));
    assert_eq!(ack["type"], "ack", "{ack}");
    assert_eq!(ack["payload"]["result"]["decision"], "approve");
    assert!(seen.iter().any(|v| v["type"] == "decision" && v["payload"]["proposal_id"] == pid.as_str()));
    let action = seen.iter().find(|v| v["type"] == "action").expect("action message");
    assert_eq!(action["payload"]["actions"], pending["actions"]);

    let (again, _) = command(&mut ws, 3, "approve", json!({"proposal_id": pid}));
    assert_eq!(again["payload"]["code"], "conflict");
    let (missing, _) = command(&mut ws, 4, "reject", json!({"proposal_id": "p99999"}));
    assert_eq!(missing["payload"]["code"], "not_found");

    let (w, _) = command(&mut ws, 5, "set_weight", json!({"modality": "gesture", "weight": 1.5}));
    assert_eq!(w["type"], "error");
    assert_eq!(w["payload"]["code"], "bad_request");
    let (w, _) = command(&mut ws, 6, "set_weight", json!({"modality": "gesture", "weight": 0.4}));
    assert_eq!(w["type"], "ack");

    let (ctx, _) = command(&mut ws, 7, "inject_context", json!({"flags": {"prior_tension": true}}));
    assert_eq!(ctx["type"], "ack");
    let (state, _) = command(&mut ws, 8, "get_state", json!({}));
    let result = &state["payload"]["result"];
    assert_eq!(result["context"]["flags"]["prior_tension"], true);
    assert_eq!(result["weights"]["gesture"], 0.4);

    let (m, _) = command(&mut ws, 9, "set_mode", json!({"mode": "auto"}));
    assert_eq!(m["type"], "ack");
    let (r, _) = command(&mut ws, 10, "replay", json!({"action": "pause"}));
    assert_eq!(r["type"], "ack");
    let (u, _) = command(&mut ws, 11, "launch", json!({}));
    assert_eq!(u["payload"]["code"], "bad_request");

    // A second client gets its own state snapshot and its own replies.
    let mut other = connect(handle.local_addr());
    read_until(&mut other, |v| v["type"] == "state");
    let (s2, _) = command(&mut other, 1, "get_state", json!({}));
    assert_eq!(s2["payload"]["result"]["mode"], "auto");

    ws.close(None).ok();
    other.close(None).ok();
    let summary = handle.shutdown().unwrap();
    assert_eq!(summary.commands, 13);
    assert_eq!(summary.errors, 5);

    let log = read_file(&log_path).unwrap();
    let decision = log
        .records
        .iter()
        .filter(|r| r.kind == RecordKind::Decision)
        .map(|r| r.data::<Value>().unwrap())
        .find(|d| d["proposal_id"] == pid.as_str())
        .expect("decision in the log");
    assert_eq!(decision["actor"], "trainer-1");
    let flagged = log.records.iter().filter(|r| r.kind == RecordKind::Context).any(|r| {
        let v: Value = r.data().unwrap();
        v["context"]["flags"]["prior_tension"] == true
    });
    assert!(flagged, "context change missing from the log");
}

#[test]
fn one_reply_per_command_under_load() {
    let res = Resources::bundled().unwrap();
    let handle = start(ServiceOptions {
        bind: "127.0.0.1:0".parse().unwrap(),
        feature_rate_hz: 10.0,
        interpreter: res.config.interpreter.clone(),
        table: res.table.clone(),
        context: res.config.simulator.context.clone(),
        risk_step_s: 0.25,
        log_path: None,
        replay: None,
    })
    .unwrap();
    let mut ws = connect(handle.local_addr());
    read_until(&mut ws, |v| v["type"] == "state");
    let bodies = [
        json!({"v": 1, "type": "get_state"}),
        json!({"v": 1, "type": "set_weight", "payload": {"modality": "scr", "weight": 2}}),
        json!({"v": 1, "type": "replay", "payload": {"action": "pause"}}),
        json!({"v": 2, "type": "get_state"}),
        json!({"v": 1, "type": "set_mode", "payload": {"mode": "sideways"}}),
    ];
    let n = 100;
    for i in 0..n {
        let mut b = bodies[i % bodies.len()].clone();
        b["id"] = json!(i);
        ws.send(Message::Text(b.to_string())).unwrap();
    }
    let mut replies = vec![0usize; n];
    let last = json!(n - 1);
    for v in read_until(&mut ws, |v| is_reply(v, &last)) {
        if v["type"] == "ack" || v["type"] == "error" {
            replies[v["id"].as_u64().unwrap() as usize] += 1;
        }
    }
    assert!(replies.iter().all(|&c| c == 1), "{replies:?}");
    // Nothing further arrives.
    std::thread::sleep(Duration::from_millis(200));
    match ws.read() {
        Ok(m) => panic!("unexpected {m:?}"),
        Err(_) => {}
    }
    let summary = handle.shutdown().unwrap();
    assert_eq!(summary.commands, n);
    assert_eq!(summary.errors, 4 * n / 5);
}

#[test]
fn bind_failure_is_an_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let res = Resources::bundled().unwrap();
    let r = start(ServiceOptions {
        bind: taken.local_addr().unwrap(),
        feature_rate_hz: 10.0,
        interpreter: res.config.interpreter.clone(),
        table: res.table.clone(),
        context: res.config.simulator.context.clone(),
        risk_step_s: 0.25,
        log_path: None,
        replay: None,
    });
    assert!(r.is_err());
}
