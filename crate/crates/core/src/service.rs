//! HTTP JSON API over a data directory of runs.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tower_http::services::{ServeDir, ServeFile};
use tracing::info;

use crate::evaluate::{VerdictError, VerdictSubmission};
use crate::pipeline::current_timestamp;
use crate::store::{Store, StoreError};

pub const API_PREFIX: &str = "/api/v1";
pub const CONTENT_HASH_HEADER: &str = "x-content-sha256";
pub const DEFAULT_PORT: u16 = 8732;

/// Error body returned with every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ServiceError {
    status: StatusCode,
    body: ApiError,
}

impl ServiceError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ApiError {
                error: error.to_string(),
                message: message.into(),
            },
        }
    }
}

impl From<StoreError> for ServiceError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        let (status, kind) = match &e {
            StoreError::RunNotFound(_) => (StatusCode::NOT_FOUND, "RunNotFound"),
            StoreError::UnknownUid(_) => (StatusCode::NOT_FOUND, "UnknownUid"),
            StoreError::StageNotReady { .. } => (StatusCode::CONFLICT, "StageNotReady"),
            StoreError::CustodyBreach { .. } => (StatusCode::CONFLICT, "CustodyBreach"),
            StoreError::Locked { .. } => (StatusCode::LOCKED, "Locked"),
            StoreError::Verdict(VerdictError::UnknownEdge { .. }) => (StatusCode::NOT_FOUND, "UnknownEdge"),
            StoreError::Verdict(VerdictError::IllegalTransition { .. }) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "IllegalTransition")
            }
            StoreError::Invalid(_) => (StatusCode::BAD_REQUEST, "Invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
        };
        Self::new(status, kind, message)
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug)]
struct AppState {
    store: Store,
    writers: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    fn writer(&self, run_id: &str) -> Arc<Mutex<()>> {
        let mut map = self.writers.lock().unwrap_or_else(|e| e.into_inner());
        map.entry(run_id.to_string()).or_default().clone()
    }
}

type Shared = Arc<AppState>;

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, StoreError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(ServiceError::from)
}

/// Lowercase hex SHA-256 of a payload.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

async fn list_runs(State(s): State<Shared>) -> Result<impl IntoResponse, ServiceError> {
    let runs = blocking(move || s.store.list()).await?;
    Ok(Json(runs))
}

async fn get_run(State(s): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let run = blocking(move || s.store.open(&id)).await?;
    Ok(Json(run.record))
}

async fn get_graph(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ServiceError> {
    let bytes = blocking(move || s.store.open(&id)?.graph_bytes()).await?;
    let hash = content_hash(&bytes);
    let etag = format!("\"{hash}\"");
    let etag_value = HeaderValue::from_str(&etag).expect("hex etag");
    let hash_value = HeaderValue::from_str(&hash).expect("hex hash");
    let matched = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    let mut resp = if matched {
        StatusCode::NOT_MODIFIED.into_response()
    } else {
        let mut r = Response::new(Body::from(bytes));
        r.headers_mut()
            .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
        r
    };
    resp.headers_mut().insert(header::ETAG, etag_value);
    resp.headers_mut().insert(CONTENT_HASH_HEADER, hash_value);
    Ok(resp)
}

async fn get_hypotheses(State(s): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let views = blocking(move || s.store.open(&id)?.hypotheses()).await?;
    Ok(Json(views))
}

async fn get_metrics(State(s): State<Shared>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let report = blocking(move || s.store.open(&id)?.metrics()).await?;
    Ok(Json(report))
}

async fn get_provenance(State(s): State<Shared>, Path(uid): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    let p = blocking(move || s.store.resolve_provenance(&uid)).await?;
    Ok(Json(p))
}

async fn post_verdict(
    State(s): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<VerdictSubmission>, JsonRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let Json(sub) = body.map_err(|e| ServiceError::new(StatusCode::BAD_REQUEST, "BadRequest", e.body_text()))?;
    let outcome = blocking(move || {
        let run = s.store.open(&id)?;
        let writer = s.writer(run.id());
        let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());
        let run = s.store.open(&id)?;
        run.record_verdict(&sub, &current_timestamp())
    })
    .await?;
    Ok(Json(outcome))
}

async fn not_found() -> ServiceError {
    ServiceError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint")
}

/// Builds the application router.
pub fn router(cfg: &ServiceConfig) -> Router {
    let state = Arc::new(AppState {
        store: Store::new(&cfg.data_dir),
        writers: Mutex::default(),
    });
    let api = Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/graph", get(get_graph))
        .route("/runs/{id}/hypotheses", get(get_hypotheses))
        .route("/runs/{id}/metrics", get(get_metrics))
        .route("/runs/{id}/verdicts", post(post_verdict))
        .route("/provenance/{uid}", get(get_provenance))
        .fallback(not_found)
        .with_state(state);
    let app = Router::new().nest(API_PREFIX, api);
    match &cfg.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(dir.join("index.html")))),
        None => app.fallback(not_found),
    }
}

/// Serves until ctrl-c.
pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    info!(addr = %listener.local_addr()?, data_dir = %cfg.data_dir.display(), "serving");
    axum::serve(listener, router(&cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
