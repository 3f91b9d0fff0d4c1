//! HTTP/JSON front end for interactive sessions.
//!
//! Mutating calls on one session are serialized by a per-session lock and
//! applied in arrival order. With a state directory configured, each
//! session's spec and events are appended to `<state_dir>/<id>.jsonl` and
//! replayed on startup.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use algorec_core::kb::{Catalog, ConfigSpace, KnowledgeBase, ParamValue};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub mod session;

pub use session::{Event, Registration, Session, SessionSpec};

/// A JSON error body `{code, message}` with its HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn validation(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "validation", message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: message.into() }
    }
}

impl From<algorec_core::Error> for ApiError {
    fn from(e: algorec_core::Error) -> Self {
        use algorec_core::Error as E;
        let message = e.to_string();
        let (status, code) = match e {
            E::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            E::Conflict(_) | E::Duplicate { .. } => (StatusCode::CONFLICT, "conflict"),
            E::Exhausted { .. } => (StatusCode::GONE, "exhausted"),
            E::Divergence { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
            _ => (StatusCode::BAD_REQUEST, "validation"),
        };
        ApiError { status, code, message }
    }
}

impl From<crate::Error> for ApiError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::Core(c) => c.into(),
            other => ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: other.to_string() },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Named seed knowledge bases; sessions pick one by name. The name
    /// `empty` always refers to an empty knowledge base.
    pub snapshots: BTreeMap<String, KnowledgeBase>,
    /// Snapshot used when a session does not name one.
    pub default_snapshot: Option<String>,
    pub state_dir: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

pub struct AppState {
    catalog: Arc<Catalog>,
    space_json: Value,
    config: ServiceConfig,
    empty: KnowledgeBase,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    next_id: std::sync::atomic::AtomicU64,
}

impl AppState {
    /// Builds the state and replays any persisted sessions.
    pub fn new(space: ConfigSpace, config: ServiceConfig) -> crate::Result<Arc<Self>> {
        for (name, kb) in &config.snapshots {
            if kb.space() != &space {
                return Err(algorec_core::Error::Validation(format!("snapshot `{name}` uses a different config space")).into());
            }
        }
        let state = AppState {
            catalog: Arc::new(Catalog::new(space.clone())?),
            space_json: crate::io::space_to_json(&space),
            empty: KnowledgeBase::new(space),
            config,
            sessions: RwLock::new(BTreeMap::new()),
            next_id: std::sync::atomic::AtomicU64::new(1),
        };
        if let Some(dir) = &state.config.state_dir {
            fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
            state.restore(dir)?;
        }
        Ok(Arc::new(state))
    }

    fn snapshot(&self, name: Option<&str>) -> ApiResult<&KnowledgeBase> {
        match name.or(self.config.default_snapshot.as_deref()) {
            None | Some("empty") => Ok(&self.empty),
            Some(n) => self.config.snapshots.get(n).ok_or_else(|| ApiError::not_found(format!("no knowledge-base snapshot named `{n}`"))),
        }
    }

    fn restore(&self, dir: &Path) -> crate::Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| crate::Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        entries.sort();
        let mut max_id = 0;
        for path in entries {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let file = fs::File::open(&path).map_err(|e| crate::Error::io(&path, e))?;
            let mut lines = std::io::BufReader::new(file).lines();
            let spec: SessionSpec = match lines.next() {
                Some(line) => serde_json::from_str(&line.map_err(|e| crate::Error::io(&path, e))?)?,
                None => continue,
            };
            let mut events = Vec::new();
            for line in lines {
                let line = line.map_err(|e| crate::Error::io(&path, e))?;
                if !line.trim().is_empty() {
                    events.push(serde_json::from_str::<Event>(&line)?);
                }
            }
            let kb = self.snapshot(spec.kb_snapshot.as_deref()).map_err(|e| algorec_core::Error::NotFound(e.message))?;
            let session = Session::replay(id.clone(), spec, self.catalog.clone(), kb, &events)?;
            tracing::info!(session = %id, events = events.len(), "restored session");
            if let Some(n) = id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            self.sessions.write().expect("lock").insert(id, Arc::new(Mutex::new(session)));
        }
        self.next_id.store(max_id + 1, std::sync::atomic::Ordering::SeqCst);
        Ok(())
    }

    fn persist(&self, id: &str, line: &impl serde::Serialize) -> ApiResult<()> {
        let Some(dir) = &self.config.state_dir else { return Ok(()) };
        let path = dir.join(format!("{id}.jsonl"));
        let mut text = serde_json::to_string(line).map_err(crate::Error::from)?;
        text.push('\n');
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .and_then(|mut f| f.write_all(text.as_bytes()).and_then(|_| f.sync_data()))
            .map_err(|e| crate::Error::io(&path, e).into())
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session `{id}`")))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/space", get(space))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/datasets", post(register_dataset))
        .route("/sessions/{id}/recommendations", get(recommendations))
        .route("/sessions/{id}/results", post(record_result))
        .route("/sessions/{id}/experiments", get(experiments));
    if let Some(dir) = &state.config.static_dir {
        app = app.nest_service("/app", ServeDir::new(dir).append_index_html_on_directories(true));
    }
    app.with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| crate::Error::io(addr.to_string(), e))?;
    let local = listener.local_addr().map_err(|e| crate::Error::io(addr.to_string(), e))?;
    tracing::info!(%local, "listening");
    println!("listening on http://{local}");
    axum::serve(listener, router(state)).await.map_err(|e| crate::Error::io(addr.to_string(), e))
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn space(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(state.space_json.clone())
}

/// Accepts JSON bodies without insisting on a content type and reports
/// malformed bodies as validation errors.
fn parse_body<T: serde::de::DeserializeOwned>(body: &str) -> ApiResult<T> {
    serde_json::from_str(body).map_err(|e| ApiError::validation(format!("invalid request body: {e}")))
}

#[derive(Deserialize)]
struct CreateSession {
    strategy: String,
    #[serde(default)]
    params: BTreeMap<String, Value>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    kb_snapshot: Option<String>,
}

async fn create_session(State(state): State<Arc<AppState>>, body: String) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: CreateSession = parse_body(&body)?;
    let params = req
        .params
        .into_iter()
        .map(|(k, v)| match v {
            Value::String(s) => Ok((k, s)),
            Value::Number(n) => Ok((k, n.to_string())),
            other => Err(ApiError::validation(format!("parameter `{k}` must be a number or string, got {other}"))),
        })
        .collect::<ApiResult<BTreeMap<_, _>>>()?;
    let spec = SessionSpec { strategy: req.strategy, params, seed: req.seed, kb_snapshot: req.kb_snapshot };
    state.snapshot(spec.kb_snapshot.as_deref())?;
    let id = format!("s{}", state.next_id.fetch_add(1, std::sync::atomic::Ordering::SeqCst));
    // training on a large seed knowledge base can take a while
    let session = {
        let (state, id, spec) = (state.clone(), id.clone(), spec.clone());
        tokio::task::spawn_blocking(move || {
            let kb = state.snapshot(spec.kb_snapshot.as_deref())?;
            Session::new(id, spec, state.catalog.clone(), kb).map_err(ApiError::from)
        })
        .await
        .map_err(|e| ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: e.to_string() })??
    };
    state.persist(&id, &spec)?;
    state.sessions.write().expect("lock").insert(id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

#[derive(Deserialize)]
struct RegisterDataset {
    dataset_id: String,
    #[serde(default)]
    metafeatures: Option<Value>,
}

async fn register_dataset(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> ApiResult<Json<Value>> {
    let req: RegisterDataset = parse_body(&body)?;
    let mf = match &req.metafeatures {
        None | Some(Value::Null) => None,
        Some(v) => Some(session::parse_metafeatures(&req.dataset_id, v)?),
    };
    let handle = state.session(&id)?;
    let mut s = handle.lock().await;
    let outcome = s.register(&req.dataset_id, mf)?;
    if outcome != Registration::Unchanged {
        state.persist(&id, s.last_event().expect("registration logged"))?;
    }
    let status = match outcome {
        Registration::Created => "registered",
        Registration::Updated => "updated",
        Registration::Unchanged => "unchanged",
    };
    Ok(Json(json!({ "dataset_id": req.dataset_id, "status": status })))
}

#[derive(Deserialize)]
struct RecQuery {
    dataset: Option<String>,
    n: Option<String>,
}

async fn recommendations(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<RecQuery>,
) -> ApiResult<Json<Value>> {
    let dataset = q.dataset.ok_or_else(|| ApiError::validation("missing query parameter `dataset`"))?;
    let n: usize = match q.n.as_deref() {
        None => 1,
        Some(s) => s.parse().map_err(|_| ApiError::validation(format!("invalid n `{s}`")))?,
    };
    if n == 0 {
        return Err(ApiError::validation("n must be at least 1"));
    }
    let handle = state.session(&id)?;
    let mut s = handle.lock().await;
    let (seq, items) = s.recommend(&dataset, n)?;
    state.persist(&id, s.last_event().expect("recommendation logged"))?;
    let out: Vec<Value> = items
        .into_iter()
        .map(|it| {
            json!({
                "algorithm": it.algorithm,
                "params": it.params,
                "config_id": it.config_id,
                "predicted_score": it.predicted_score,
                "seq": seq,
            })
        })
        .collect();
    Ok(Json(Value::Array(out)))
}

#[derive(Deserialize)]
struct RecordResult {
    dataset_id: String,
    algorithm: String,
    #[serde(default)]
    params: BTreeMap<String, ParamValue>,
    train_score: f64,
    #[serde(default)]
    holdout_score: Option<f64>,
}

async fn record_result(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: String,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: RecordResult = parse_body(&body)?;
    let handle = state.session(&id)?;
    let mut s = handle.lock().await;
    let event = s.record_result(&req.dataset_id, &req.algorithm, &req.params, req.train_score, req.holdout_score)?.clone();
    state.persist(&id, &event)?;
    Ok((StatusCode::CREATED, Json(serde_json::to_value(event).map_err(crate::Error::from)?)))
}

#[derive(Deserialize)]
struct Page {
    after: Option<u64>,
    limit: Option<usize>,
}

async fn experiments(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(page): Query<Page>,
) -> ApiResult<Json<Value>> {
    let handle = state.session(&id)?;
    let s = handle.lock().await;
    let after = page.after.unwrap_or(0);
    let limit = page.limit.unwrap_or(1000).clamp(1, 10_000);
    let events: Vec<&Event> = s.events().iter().filter(|e| e.seq() > after).take(limit).collect();
    let last = events.last().map(|e| e.seq());
    let more = last.is_some_and(|l| s.events().last().is_some_and(|e| e.seq() > l));
    Ok(Json(json!({
        "session_id": s.id,
        "spec": s.spec,
        "total": s.events().len(),
        "events": events,
        "next_after": if more { last } else { None },
    })))
}
