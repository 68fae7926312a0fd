use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ltlbt_service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn three_block() -> Value {
    serde_json::from_str(include_str!("../../../scenarios/three_block.json")).unwrap()
}

fn app() -> (Arc<AppState>, Router) {
    let state = AppState::new(Duration::from_secs(3600));
    (state.clone(), router(state))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    call_with(app, Request::builder().method(method).uri(uri), body).await
}

async fn call_with(
    app: &Router,
    req: axum::http::request::Builder,
    body: Option<Value>,
) -> (StatusCode, Vec<u8>) {
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router, scenario: Value, options: Value) -> String {
    let (status, h) =
        json_call(app, "POST", "/v1/sessions", Some(json!({"schema": "v1", "scenario": scenario, "options": options})))
            .await;
    assert_eq!(status, StatusCode::CREATED, "{h}");
    h["id"].as_str().unwrap().to_string()
}

async fn wait_for(app: &Router, id: &str, status: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (_, h) = json_call(app, "GET", &format!("/v1/sessions/{id}"), None).await;
        if h["status"] == status {
            return h;
        }
        assert!(Instant::now() < deadline, "never reached {status}: {h}");
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Parses an SSE body into (id, event, data) triples.
fn parse_sse(body: &[u8]) -> Vec<(usize, String, String)> {
    let text = String::from_utf8(body.to_vec()).unwrap();
    text.split("\n\n")
        .filter_map(|block| {
            let (mut id, mut event, mut data) = (None, None, None);
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id: ") {
                    id = v.parse().ok();
                } else if let Some(v) = line.strip_prefix("event: ") {
                    event = Some(v.to_string());
                } else if let Some(v) = line.strip_prefix("data: ") {
                    data = Some(v.to_string());
                }
            }
            Some((id?, event?, data?))
        })
        .collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn create_list_and_get() {
    let (_, app) = app();
    let id = create(&app, three_block(), json!({"bt": "online_state", "seed": 4})).await;
    let (status, list) = json_call(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list["sessions"].as_array().unwrap().len(), 1);
    let (status, h) = json_call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!((h["status"].as_str(), h["variant"].as_str(), h["seed"].as_u64()), (Some("idle"), Some("online_state"), Some(4)));
    assert!(h["metrics"].is_object());
    assert_eq!(json_call(&app, "GET", "/v1/sessions/s999", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_scenarios_name_the_field() {
    let (_, app) = app();
    let mut sc = three_block();
    sc["regions"][1]["id"] = "r1".into();
    let (status, e) = json_call(&app, "POST", "/v1/sessions", Some(json!({"schema": "v1", "scenario": sc}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(e["fields"].as_array().unwrap().iter().any(|f| f["path"] == "scenario.regions[1].id"), "{e}");

    let mut sc = three_block();
    sc["home"] = "nowhere".into();
    let (status, e) = json_call(&app, "POST", "/v1/sessions", Some(json!({"schema": "v1", "scenario": sc}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(e["fields"][0]["path"].as_str().unwrap().starts_with("scenario.home"), "{e}");

    let (status, e) =
        json_call(&app, "POST", "/v1/sessions", Some(json!({"schema": "v2", "scenario": three_block()}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["fields"][0]["path"], "schema");

    let (status, e) = json_call(
        &app,
        "POST",
        "/v1/sessions",
        Some(json!({"schema": "v1", "scenario": three_block(), "options": {"bt": "sideways"}})),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(e["fields"][0]["path"], "options.bt");
}

#[tokio::test(flavor = "multi_thread")]
async fn unsatisfiable_goal_is_accepted_then_fails_on_start() {
    let (_, app) = app();
    let mut sc = three_block();
    sc["formula"] = "G F o1r1 & G F o1r2".into();
    let id = create(&app, sc, json!({})).await;
    let (status, h) = json_call(&app, "POST", &format!("/v1/sessions/{id}/start"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h["status"], "failed");
    let (_, trace) = call(&app, "GET", &format!("/v1/sessions/{id}/trace"), None).await;
    let trace = String::from_utf8(trace).unwrap();
    assert!(trace.contains("plan_failed"));
    assert!(trace.lines().last().unwrap().contains("\"done\""));
}

#[tokio::test(flavor = "multi_thread")]
async fn illegal_transitions_conflict() {
    let (_, app) = app();
    let id = create(&app, three_block(), json!({"speed": 1000.0})).await;
    let path = |op: &str| format!("/v1/sessions/{id}/{op}");
    assert_eq!(json_call(&app, "POST", &path("pause"), None).await.0, StatusCode::CONFLICT);
    assert_eq!(json_call(&app, "POST", &path("resume"), None).await.0, StatusCode::CONFLICT);
    let ev = json!({"schema": "v1", "event": {"kind": "remove_object", "object": "o1"}});
    assert_eq!(json_call(&app, "POST", &path("interventions"), Some(ev)).await.0, StatusCode::CONFLICT);

    assert_eq!(json_call(&app, "POST", &path("start"), None).await.0, StatusCode::OK);
    assert_eq!(json_call(&app, "POST", &path("start"), None).await.0, StatusCode::CONFLICT);
    let (status, h) = json_call(&app, "POST", &path("pause"), None).await;
    assert_eq!((status, h["status"].as_str()), (StatusCode::OK, Some("paused")));
    assert_eq!(json_call(&app, "POST", &path("pause"), None).await.0, StatusCode::CONFLICT);
    assert_eq!(json_call(&app, "POST", &path("resume"), None).await.0, StatusCode::OK);

    let h = wait_for(&app, &id, "done").await;
    assert_eq!(h["metrics"]["success"], true);
    assert_eq!(json_call(&app, "POST", &path("start"), None).await.0, StatusCode::CONFLICT);
    assert_eq!(json_call(&app, "POST", &path("resume"), None).await.0, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn interventions_are_acknowledged_with_their_time() {
    let (_, app) = app();
    let id = create(&app, three_block(), json!({"speed": 1.0})).await;
    let path = |op: &str| format!("/v1/sessions/{id}/{op}");
    json_call(&app, "POST", &path("start"), None).await;
    json_call(&app, "POST", &path("pause"), None).await;
    let (_, h) = json_call(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let clock = h["clock"].as_f64().unwrap();

    let ev = json!({"schema": "v1", "event": {"kind": "add_object", "object": "o4", "region": "r1"}});
    let (status, ack) = json_call(&app, "POST", &path("interventions"), Some(ev)).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack["applied_at"].as_f64().unwrap(), clock);
    let event_id = ack["event_id"].as_u64().unwrap() as usize;
    let (_, trace) = call(&app, "GET", &path("trace"), None).await;
    let line: Value = serde_json::from_str(String::from_utf8(trace).unwrap().lines().nth(event_id).unwrap()).unwrap();
    assert_eq!(line["id"].as_u64(), Some(event_id as u64));

    let ev = json!({"schema": "v1", "event": {"kind": "remove_object", "object": "o9"}});
    let (status, e) = json_call(&app, "POST", &path("interventions"), Some(ev)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(e["message"].as_str().unwrap().contains("o9"), "{e}");

    let ev = json!({"schema": "v1", "event": {"kind": "teleport"}});
    assert_eq!(json_call(&app, "POST", &path("interventions"), Some(ev)).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_matches_the_trace_export() {
    let (_, app) = app();
    let id = create(&app, three_block(), json!({"speed": 2000.0})).await;
    json_call(&app, "POST", &format!("/v1/sessions/{id}/start"), None).await;
    // The stream is opened while the session runs and closes after `done`.
    let (status, body) = call(&app, "GET", &format!("/v1/sessions/{id}/stream"), None).await;
    assert_eq!(status, StatusCode::OK);
    let events = parse_sse(&body);
    let (_, trace) = call(&app, "GET", &format!("/v1/sessions/{id}/trace"), None).await;
    let trace = String::from_utf8(trace).unwrap();

    let streamed: Vec<&str> = events.iter().map(|(_, _, d)| d.as_str()).collect();
    assert_eq!(streamed, trace.lines().collect::<Vec<_>>());
    assert!(events.iter().enumerate().all(|(i, (id, _, _))| *id == i));
    let kinds: Vec<&str> = events.iter().map(|(_, k, _)| k.as_str()).collect();
    assert_eq!(kinds[..2], ["scenario_loaded", "initial_plan_started"]);
    assert_eq!(*kinds.last().unwrap(), "done");

    // Resuming after an event id replays exactly the rest.
    let resume_after = 5;
    let req = Request::builder().uri(format!("/v1/sessions/{id}/stream")).header("Last-Event-ID", resume_after.to_string());
    let (_, body) = call_with(&app, req, None).await;
    let rest = parse_sse(&body);
    assert_eq!(rest, events[resume_after + 1..]);
}

#[tokio::test(flavor = "multi_thread")]
async fn dot_exports() {
    let (_, app) = app();
    let id = create(&app, three_block(), json!({})).await;
    json_call(&app, "POST", &format!("/v1/sessions/{id}/start"), None).await;
    json_call(&app, "POST", &format!("/v1/sessions/{id}/pause"), None).await;
    for kind in ["bt", "pa"] {
        let (status, body) = call(&app, "GET", &format!("/v1/sessions/{id}/dot/{kind}"), None).await;
        assert_eq!(status, StatusCode::OK);
        let dot = String::from_utf8(body).unwrap();
        assert!(dot.starts_with("digraph") && dot.contains("->"), "{kind}: {dot}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn idle_sessions_are_evicted() {
    let state = AppState::new(Duration::from_secs(60));
    let app = router(state.clone());
    let id = create(&app, three_block(), json!({})).await;
    assert!(state.evict_idle(Instant::now()).is_empty());
    assert_eq!(state.evict_idle(Instant::now() + Duration::from_secs(61)), vec![id.clone()]);
    assert!(state.is_empty());
    assert_eq!(json_call(&app, "GET", &format!("/v1/sessions/{id}"), None).await.0, StatusCode::GONE);
    assert_eq!(json_call(&app, "POST", &format!("/v1/sessions/{id}/start"), None).await.0, StatusCode::GONE);
}
