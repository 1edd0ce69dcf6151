use std::sync::Arc;

use consensus_core::agent::{PromptTemplates, StubScripts};
use consensus_core::domain::ClockMode;
use consensus_core::sim::{stub_pool, SimSetup};
use consensus_lab::config::RuntimeConfig;
use consensus_lab::eventlog::{read_log, replay};
use consensus_lab::server::{router, AppState};
use futures_util::StreamExt;
use serde_json::{json, Value};

struct Server {
    base: String,
    http: reqwest::Client,
    dir: tempfile::TempDir,
}

async fn start(operator_key: Option<&str>) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let config = RuntimeConfig { data_dir: dir.path().into(), clock: ClockMode::Virtual, ..RuntimeConfig::default() };
    let setup = SimSetup::new(stub_pool(StubScripts::default()), Arc::new(PromptTemplates::default()));
    let app = Arc::new(AppState::new(config, operator_key.map(String::from), setup).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(app)).await.unwrap() });
    Server { base: format!("http://{addr}"), http: reqwest::Client::new(), dir }
}

impl Server {
    async fn post(&self, path: &str, key: Option<&str>, body: Value) -> (u16, Value) {
        let mut r = self.http.post(format!("{}{path}", self.base)).json(&body);
        if let Some(k) = key {
            r = r.header("x-operator-key", k);
        }
        let r = r.send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }

    async fn get(&self, path: &str, key: Option<&str>) -> (u16, Value) {
        let mut r = self.http.get(format!("{}{path}", self.base));
        if let Some(k) = key {
            r = r.header("x-operator-key", k);
        }
        let r = r.send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap_or(Value::Null))
    }
}

#[tokio::test]
async fn operator_routes_need_the_key() {
    let s = start(Some("sesame")).await;
    assert_eq!(s.get("/health", None).await, (200, json!({ "ok": true })));
    let (st, v) = s.post("/games", None, json!({ "condition": "bot-only" })).await;
    assert_eq!((st, v["error"].as_str()), (401, Some("unauthorized")));
    assert_eq!(s.post("/games", Some("nope"), json!({ "condition": "bot-only" })).await.0, 401);
    assert_eq!(s.get("/games", None).await.0, 401);

    let (st, v) = s.post("/games", Some("sesame"), json!({ "condition": "bot-only", "seed": 3, "game_id": "bots" })).await;
    assert_eq!(st, 201, "{v}");
    assert!(v["credentials"].as_array().unwrap().is_empty());
    let (st, list) = s.get("/games", Some("sesame")).await;
    assert_eq!(st, 200);
    assert_eq!(list[0]["game_id"], "bots");
    // virtual bot-only games run to completion at launch
    assert_eq!(list[0]["stage"], "concluded");
    let state = replay(&read_log(&s.dir.path().join("bots.jsonl")).unwrap()).unwrap();
    assert_eq!(state.game_id, "bots");

    let (st, v) = s.post("/games", Some("sesame"), json!({ "condition": "bot-only", "game_id": "bots" })).await;
    assert_eq!((st, v["error"].as_str()), (409, Some("game_exists")));
}

#[tokio::test]
async fn malformed_requests_are_rejected() {
    let s = start(None).await;
    let (st, v) = s.post("/games", None, json!({ "condition": "robots-only" })).await;
    assert_eq!((st, v["error"].as_str()), (400, Some("bad_condition")));
    let (st, v) = s.post("/games", None, json!({ "condition": "bot-only", "game_id": "../etc" })).await;
    assert_eq!((st, v["error"].as_str()), (400, Some("bad_game_id")));
    let (st, v) = s.post("/games", None, json!({ "condition": "bot-human" })).await;
    assert_eq!((st, v["error"].as_str()), (400, Some("slot_required")));
    let (st, _) = s.post("/lobby/signup", None, json!({ "slot": "", "token": "a" })).await;
    assert_eq!(st, 400);
    assert_eq!(s.get("/lobby/s/unknown", None).await.0, 404);
    assert_eq!(s.post("/games/none/login", None, json!({ "username": "a", "password": "b" })).await.0, 404);
    assert_eq!(s.post("/games/none/advance", None, json!({ "by_ms": 5 })).await.0, 404);
}

#[tokio::test]
async fn sessions_gate_participant_routes() {
    let s = start(None).await;
    for t in ["a", "b", "c"] {
        assert_eq!(s.post("/lobby/signup", None, json!({ "slot": "x", "token": t })).await.0, 201);
    }
    let (st, launch) = s.post("/games", None, json!({ "condition": "bot-human", "slot": "x", "game_id": "g" })).await;
    assert_eq!(st, 201, "{launch}");
    assert_eq!(launch["deferred"], 0);
    let cred = &launch["credentials"][0];
    // an assigned token cannot queue again for the same slot
    assert_eq!(s.post("/lobby/signup", None, json!({ "slot": "x", "token": "a" })).await.0, 409);

    let r = s.http.get(format!("{}/games/g/state", s.base)).send().await.unwrap();
    assert_eq!(r.status().as_u16(), 401);
    let r = s.http.get(format!("{}/games/g/state", s.base)).bearer_auth("forged").send().await.unwrap();
    assert_eq!(r.status().as_u16(), 401);
    let ws = format!("{}/games/g/stream?token=forged", s.base.replace("http", "ws"));
    assert!(tokio_tungstenite::connect_async(ws).await.is_err());

    let (st, login) = s.post("/games/g/login", None, json!({ "username": cred["username"], "password": cred["password"] })).await;
    assert_eq!(st, 200);
    let token = login["token"].as_str().unwrap();
    let view: Value = s.http.get(format!("{}/games/g/state", s.base)).bearer_auth(token).send().await.unwrap().json().await.unwrap();
    assert_eq!(view["stage"], "stage1");
    assert_eq!(view["username"], cred["username"]);
    assert_eq!(view["peers"].as_array().unwrap().len(), 5);

    // engine refusals map to 409 with the engine's code
    let post = |body: Value| s.http.post(format!("{}/games/g/actions", s.base)).bearer_auth(token).json(&body).send();
    let r = post(json!({ "type": "submit_initial_opinion", "opinion": "carnivore", "confidence": 2 })).await.unwrap();
    assert_eq!(r.status().as_u16(), 409);
    let r = post(json!({ "type": "send_invite", "to": "Nobody" })).await.unwrap();
    assert_eq!(r.status().as_u16(), 409);
    let r = post(json!({ "type": "dance" })).await.unwrap();
    assert!(r.status().is_client_error());
    let r = post(json!({ "type": "submit_initial_opinion", "opinion": "vegan", "confidence": 2 })).await.unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let v: Value = r.json().await.unwrap();
    assert_eq!(v["opinion"], "vegan");

    let (st, v) = s.post("/games/g/advance", None, json!({ "to_ms": 5, "by_ms": 5 })).await;
    assert_eq!(st, 400, "{v}");

    // the stream opens with a state frame and reports bad actions as error frames
    let ws = format!("{}/games/g/stream?token={token}", s.base.replace("http", "ws"));
    let (mut sock, _) = tokio_tungstenite::connect_async(ws).await.unwrap();
    let first: Value = serde_json::from_str(sock.next().await.unwrap().unwrap().to_text().unwrap()).unwrap();
    assert_eq!(first["type"], "state");
    assert_eq!(first["view"]["opinion"], "vegan");
    use futures_util::SinkExt;
    sock.send(tokio_tungstenite::tungstenite::Message::Text(r#"{"type":"terminate"}"#.into())).await.unwrap();
    let err: Value = serde_json::from_str(sock.next().await.unwrap().unwrap().to_text().unwrap()).unwrap();
    assert_eq!(err["type"], "error");
    sock.send(tokio_tungstenite::tungstenite::Message::Text("not json".into())).await.unwrap();
    let err: Value = serde_json::from_str(sock.next().await.unwrap().unwrap().to_text().unwrap()).unwrap();
    assert_eq!((err["type"].as_str(), err["code"].as_str()), (Some("error"), Some("bad_request")));
}
