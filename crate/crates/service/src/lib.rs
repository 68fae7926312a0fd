//! HTTP API over live sessions.
//!
//! Commands are JSON over HTTP; the event feed is a server-sent-events
//! stream whose `data` fields are exactly the session's trace lines. All
//! sessions live in memory and are dropped after an idle period.

use std::collections::{HashMap, HashSet};
use std::convert::Infallible;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream};
use ltlbt_core::scenario::{FieldError, Scenario, ScenarioError, SCHEMA};
use ltlbt_core::sim::{
    BtVariant, GraphMode, Intervention, InterventionScript, Outcome, PlannerConfig, Session, SessionConfig, SimError,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

pub const DEFAULT_IDLE_TTL: Duration = Duration::from_secs(3600);
const MAX_SPEED: f64 = 10_000.0;
const MAX_STEPS_PER_WAKE: usize = 5_000;
const WAKE: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    Running,
    Paused,
    Done,
    Failed,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    #[serde(default = "schema_v1")]
    schema: String,
    scenario: Value,
    #[serde(default)]
    options: Options,
    #[serde(default)]
    script: Option<InterventionScript>,
}

fn schema_v1() -> String {
    SCHEMA.into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct Options {
    bt: Option<String>,
    planner: Option<String>,
    graph: Option<String>,
    seed: Option<u64>,
    provider_latency_ms: Option<f64>,
    timeout_s: Option<f64>,
    speed: Option<f64>,
    snapshot_period_s: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeedRequest {
    #[serde(default = "schema_v1")]
    schema: String,
    speed: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterventionRequest {
    #[serde(default = "schema_v1")]
    schema: String,
    event: Intervention,
}

/// An error response: `{schema, error, message, fields?}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), fields: Vec::new() }
    }

    fn invalid(fields: Vec<FieldError>) -> Self {
        let message = fields.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, code: "validation", message, fields }
    }

    fn field(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self::invalid(vec![FieldError { path: path.into(), message: message.into() }])
    }

    fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, "conflict", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "schema": SCHEMA, "error": self.code, "message": self.message });
        if !self.fields.is_empty() {
            body["fields"] = serde_json::to_value(&self.fields).expect("field errors serialize");
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses `bytes` as `T`, reporting the failing field path.
fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8], prefix: &str) -> ApiResult<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let path = match (prefix, path.as_str()) {
            (p, ".") => p.to_string(),
            ("", p) => p.to_string(),
            (p, q) => format!("{p}.{q}"),
        };
        ApiError::field(path, e.into_inner().to_string())
    })
}

fn check_schema(schema: &str) -> ApiResult<()> {
    if schema == SCHEMA {
        Ok(())
    } else {
        Err(ApiError::field("schema", format!("unsupported schema {schema:?}, expected {SCHEMA:?}")))
    }
}

struct Inner {
    session: Session,
    status: Status,
    speed: f64,
    last_access: Instant,
    /// (event type, JSON line) for every trace event published so far.
    lines: Vec<(&'static str, Arc<str>)>,
    runner: Option<tokio::task::AbortHandle>,
}

impl Inner {
    /// Publishes new trace events and settles the terminal status.
    fn sync(&mut self) {
        for e in &self.session.trace()[self.lines.len()..] {
            let line = serde_json::to_string(e).expect("trace events serialize");
            self.lines.push((e.kind(), line.into()));
        }
        if let Some(outcome) = self.session.outcome() {
            self.status = if outcome == Outcome::Success { Status::Done } else { Status::Failed };
        }
    }

    fn finished(&self) -> bool {
        matches!(self.status, Status::Done | Status::Failed)
    }
}

struct Entry {
    id: String,
    inner: Mutex<Inner>,
    published: watch::Sender<usize>,
}

impl Entry {
    fn lock(&self) -> MutexGuard<'_, Inner> {
        let mut g = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        g.last_access = Instant::now();
        g
    }

    fn publish(&self, g: &mut Inner) {
        g.sync();
        self.published.send_replace(g.lines.len());
    }

    fn handle(&self, g: &Inner) -> Value {
        let cfg = g.session.config();
        json!({
            "schema": SCHEMA,
            "id": self.id,
            "status": g.status,
            "speed": g.speed,
            "scenario": g.session.metrics().scenario,
            "variant": cfg.variant.name(),
            "planner": cfg.planner.name(),
            "graph": g.session.metrics().graph,
            "seed": cfg.seed,
            "clock": g.session.clock(),
            "events": g.lines.len(),
        })
    }
}

/// Session registry shared by all handlers.
pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<Entry>>>,
    evicted: Mutex<HashSet<String>>,
    next_id: AtomicU64,
    idle_ttl: Duration,
}

impl AppState {
    pub fn new(idle_ttl: Duration) -> Arc<Self> {
        Arc::new(Self {
            sessions: Mutex::default(),
            evicted: Mutex::default(),
            next_id: AtomicU64::new(1),
            idle_ttl,
        })
    }

    fn get(&self, id: &str) -> ApiResult<Arc<Entry>> {
        if let Some(e) = self.sessions.lock().expect("registry lock").get(id) {
            return Ok(e.clone());
        }
        if self.evicted.lock().expect("registry lock").contains(id) {
            Err(ApiError::new(StatusCode::GONE, "gone", format!("session {id} was evicted")))
        } else {
            Err(ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}")))
        }
    }

    /// Drops sessions not accessed for the idle period; returns their ids.
    pub fn evict_idle(&self, now: Instant) -> Vec<String> {
        let mut sessions = self.sessions.lock().expect("registry lock");
        let stale: Vec<String> = sessions
            .iter()
            .filter(|(_, e)| {
                let g = e.inner.lock().unwrap_or_else(|p| p.into_inner());
                now.saturating_duration_since(g.last_access) >= self.idle_ttl
            })
            .map(|(id, _)| id.clone())
            .collect();
        let mut evicted = self.evicted.lock().expect("registry lock");
        for id in &stale {
            if let Some(e) = sessions.remove(id) {
                let mut g = e.inner.lock().unwrap_or_else(|p| p.into_inner());
                if let Some(r) = g.runner.take() {
                    r.abort();
                }
            }
            evicted.insert(id.clone());
        }
        stale
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Periodically evicts idle sessions.
pub fn spawn_evictor(state: Arc<AppState>, every: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            state.evict_idle(Instant::now());
        }
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session).get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/start", post(start))
        .route("/v1/sessions/{id}/pause", post(pause))
        .route("/v1/sessions/{id}/resume", post(resume))
        .route("/v1/sessions/{id}/speed", post(set_speed))
        .route("/v1/sessions/{id}/interventions", post(post_intervention))
        .route("/v1/sessions/{id}/stream", get(stream_events))
        .route("/v1/sessions/{id}/trace", get(export_trace))
        .route("/v1/sessions/{id}/dot/bt", get(export_bt_dot))
        .route("/v1/sessions/{id}/dot/pa", get(export_pa_dot))
        .with_state(state)
}

fn session_config(sc: &Scenario, o: &Options) -> ApiResult<SessionConfig> {
    let mut cfg = SessionConfig::for_scenario(sc);
    if let Some(bt) = &o.bt {
        cfg.variant = bt.parse::<BtVariant>().map_err(|e| ApiError::field("options.bt", e))?;
    }
    if let Some(p) = &o.planner {
        cfg.planner = PlannerConfig::parse(p).map_err(|e| ApiError::field("options.planner", e))?;
        cfg.planner = cfg.planner.with_latency_ms(sc.cost.latency_ms);
    }
    if let Some(g) = &o.graph {
        cfg.planner = cfg.planner.with_graph(g.parse::<GraphMode>().map_err(|e| ApiError::field("options.graph", e))?);
    }
    if let Some(ms) = o.provider_latency_ms {
        if !(ms >= 0.0 && ms.is_finite()) {
            return Err(ApiError::field("options.provider_latency_ms", "must be a non-negative number"));
        }
        cfg.planner = cfg.planner.with_latency_ms(ms);
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(t) = o.timeout_s {
        if !(t > 0.0 && t.is_finite()) {
            return Err(ApiError::field("options.timeout_s", "must be positive"));
        }
        cfg.timeout_s = t;
    }
    if let Some(p) = o.snapshot_period_s {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(ApiError::field("options.snapshot_period_s", "must be non-negative"));
        }
        cfg.snapshot_period_s = p;
    }
    Ok(cfg)
}

fn check_speed(speed: f64, path: &str) -> ApiResult<f64> {
    if speed > 0.0 && speed <= MAX_SPEED {
        Ok(speed)
    } else {
        Err(ApiError::field(path, format!("must be in (0, {MAX_SPEED}]")))
    }
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateRequest = parse(&body, "")?;
    check_schema(&req.schema)?;
    let scenario: Scenario = parse(req.scenario.to_string().as_bytes(), "scenario")?;
    scenario.validate().map_err(|e| match e {
        ScenarioError::Invalid(fields) => ApiError::invalid(
            fields.into_iter().map(|f| FieldError { path: format!("scenario.{}", f.path), message: f.message }).collect(),
        ),
        ScenarioError::Json(m) => ApiError::field("scenario", m),
    })?;
    let cfg = session_config(&scenario, &req.options)?;
    let speed = check_speed(req.options.speed.unwrap_or(1.0), "options.speed")?;
    let script = req.script.unwrap_or_else(InterventionScript::empty);

    let id = format!("s{}", state.next_id.fetch_add(1, Ordering::Relaxed));
    let (published, _) = watch::channel(0);
    let entry = Arc::new(Entry {
        id: id.clone(),
        inner: Mutex::new(Inner {
            session: Session::new(&scenario, cfg, &script),
            status: Status::Idle,
            speed,
            last_access: Instant::now(),
            lines: Vec::new(),
            runner: None,
        }),
        published,
    });
    let handle = {
        let mut g = entry.lock();
        entry.publish(&mut g);
        entry.handle(&g)
    };
    state.sessions.lock().expect("registry lock").insert(id, entry);
    Ok((StatusCode::CREATED, Json(handle)))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Json<Value> {
    let entries: Vec<Arc<Entry>> = state.sessions.lock().expect("registry lock").values().cloned().collect();
    let mut handles: Vec<Value> = entries.iter().map(|e| e.handle(&e.lock())).collect();
    handles.sort_by_key(|h| h["id"].as_str().and_then(|s| s[1..].parse::<u64>().ok()));
    Json(json!({ "schema": SCHEMA, "sessions": handles }))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let entry = state.get(&id)?;
    let g = entry.lock();
    let mut h = entry.handle(&g);
    h["metrics"] = serde_json::to_value(g.session.metrics()).expect("metrics serialize");
    h["outcome"] = serde_json::to_value(g.session.outcome()).expect("outcome serializes");
    Ok(Json(h))
}

/// Advances the session in real time, `speed` simulated seconds per second.
async fn run_loop(entry: Arc<Entry>) {
    let mut last = Instant::now();
    let mut budget = 0.0;
    loop {
        tokio::time::sleep(WAKE).await;
        let now = Instant::now();
        let elapsed = now.duration_since(last).as_secs_f64();
        last = now;
        let mut g = entry.inner.lock().unwrap_or_else(|p| p.into_inner());
        match g.status {
            Status::Running => {}
            Status::Paused => {
                budget = 0.0;
                continue;
            }
            _ => break,
        }
        budget += elapsed * g.speed * g.session.config().tick_hz;
        let mut steps = 0;
        while budget >= 1.0 && steps < MAX_STEPS_PER_WAKE {
            budget -= 1.0;
            steps += 1;
            if !g.session.step() {
                break;
            }
        }
        // Do not try to catch up after a stall.
        budget = budget.min(1.0);
        entry.publish(&mut g);
        if g.finished() {
            break;
        }
    }
}

async fn start(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let entry = state.get(&id)?;
    let mut g = entry.lock();
    if g.status != Status::Idle {
        return Err(ApiError::conflict(format!("cannot start a session that is {:?}", g.status).to_lowercase()));
    }
    g.status = Status::Running;
    // The first step computes the initial plan, so an unsatisfiable goal
    // fails here.
    g.session.step();
    entry.publish(&mut g);
    if !g.finished() {
        g.runner = Some(tokio::spawn(run_loop(entry.clone())).abort_handle());
    }
    Ok(Json(entry.handle(&g)))
}

fn transition(state: &AppState, id: &str, from: Status, to: Status) -> ApiResult<Json<Value>> {
    let entry = state.get(id)?;
    let mut g = entry.lock();
    if g.status != from {
        return Err(ApiError::conflict(format!("session is {:?}, expected {:?}", g.status, from).to_lowercase()));
    }
    g.status = to;
    Ok(Json(entry.handle(&g)))
}

async fn pause(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    transition(&state, &id, Status::Running, Status::Paused)
}

async fn resume(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    transition(&state, &id, Status::Paused, Status::Running)
}

async fn set_speed(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let req: SpeedRequest = parse(&body, "")?;
    check_schema(&req.schema)?;
    let speed = check_speed(req.speed, "speed")?;
    let entry = state.get(&id)?;
    let mut g = entry.lock();
    g.speed = speed;
    Ok(Json(entry.handle(&g)))
}

async fn post_intervention(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let req: InterventionRequest = parse(&body, "")?;
    check_schema(&req.schema)?;
    let entry = state.get(&id)?;
    let mut g = entry.lock();
    if !matches!(g.status, Status::Running | Status::Paused) {
        return Err(ApiError::conflict(format!("interventions need a running or paused session, not {:?}", g.status)));
    }
    let applied_at = g.session.apply_intervention(&req.event).map_err(|e| match e {
        SimError::HeldObjectConflict(_) => ApiError::new(StatusCode::CONFLICT, "held_object_conflict", e.to_string()),
        SimError::BadStatus(_) => ApiError::conflict(e.to_string()),
        SimError::Unresolvable(_) | SimError::Domain(_) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unresolvable_event", e.to_string())
        }
    })?;
    entry.publish(&mut g);
    let event_id = g.lines.len() - 1;
    Ok(Json(json!({ "schema": SCHEMA, "applied_at": applied_at, "event_id": event_id, "kind": req.event.kind() })))
}

fn last_event_id(headers: &HeaderMap) -> ApiResult<Option<usize>> {
    match headers.get("last-event-id") {
        None => Ok(None),
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .map(Some)
            .ok_or_else(|| ApiError::field("Last-Event-ID", "must be an event id")),
    }
}

async fn stream_events(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let entry = state.get(&id)?;
    let next = last_event_id(&headers)?.map_or(0, |i| i + 1);
    let rx = entry.published.subscribe();
    let events = stream::unfold((entry, next, rx), |(entry, next, mut rx)| async move {
        loop {
            let (line, finished) = {
                let g = entry.lock();
                (g.lines.get(next).cloned(), g.finished())
            };
            if let Some((kind, data)) = line {
                let event = Event::default().id(next.to_string()).event(kind).data(&*data);
                return Some((Ok(event), (entry, next + 1, rx)));
            }
            if finished || rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

async fn export_trace(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = state.get(&id)?;
    let body = entry.lock().session.trace_jsonl();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

fn dot(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/vnd.graphviz")], body).into_response()
}

async fn export_bt_dot(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = state.get(&id)?;
    let body = entry.lock().session.tree().to_dot();
    Ok(dot(body))
}

async fn export_pa_dot(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = state.get(&id)?;
    let body = entry.lock().session.product_dot();
    Ok(dot(body))
}
