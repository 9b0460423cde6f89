//! HTTP API over the study store: manifest ingest, batch runs, the review
//! worklist, adjudication and metrics. Static review assets are served
//! under `/ui/` when a directory is configured.

use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use ptx_core::backends::BackendSpec;
use ptx_core::pipeline::PipelineConfig;
use ptx_core::store::{AdjudicationRequest, BatchFilter, Store, StoreError, StudyStatus};

pub const PGM_CONTENT_TYPE: &str = "image/x-portable-graymap";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Backend used when a batch request names none.
    pub default_backend: String,
    pub oracle_noise: f64,
    pub seed: u64,
    /// Batch worker threads; 0 means one per core.
    pub workers: usize,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { default_backend: "stub".into(), oracle_noise: 0.0, seed: 0, workers: 0, ui_dir: None }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    cfg: Arc<ServiceConfig>,
    batch_gate: Arc<tokio::sync::Mutex<()>>,
}

impl AppState {
    pub fn new(store: Arc<Store>, cfg: ServiceConfig) -> Self {
        Self { store, cfg: Arc::new(cfg), batch_gate: Arc::new(tokio::sync::Mutex::new(())) }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::UnknownStudy(_) => StatusCode::NOT_FOUND,
            StoreError::NotFlagged { .. } => StatusCode::CONFLICT,
            StoreError::Validation(_) | StoreError::FileUnreadable { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io(_) | StoreError::CorruptLog { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}", self.message);
        }
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let body: &[u8] = if body.iter().all(u8::is_ascii_whitespace) { b"{}" } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::invalid(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

/// Either a server-side manifest path or inline manifest text.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestRequest {
    path: Option<PathBuf>,
    manifest: Option<String>,
    /// Base for relative paths in inline manifests; defaults to the working directory.
    base_dir: Option<PathBuf>,
}

async fn post_manifest(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: ManifestRequest = parse_body(&body)?;
    let store = app.store.clone();
    let report = match (req.path, req.manifest) {
        (Some(path), None) => blocking(move || store.ingest_manifest(&path)).await??,
        (None, Some(text)) => {
            let base = req.base_dir.unwrap_or_else(|| PathBuf::from("."));
            blocking(move || store.ingest_text(&text, &base)).await?
        }
        _ => return Err(ApiError::invalid("give exactly one of `path` or `manifest`")),
    };
    Ok(Json(report).into_response())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BatchRequest {
    filter: BatchFilter,
    backend: Option<String>,
    config: Option<PipelineConfig>,
    workers: Option<usize>,
}

async fn post_batch(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: BatchRequest = parse_body(&body)?;
    let name = req.backend.unwrap_or_else(|| app.cfg.default_backend.clone());
    let spec = BackendSpec::parse(&name, app.cfg.oracle_noise, app.cfg.seed).map_err(|e| ApiError::invalid(e.to_string()))?;
    let cfg = req.config.unwrap_or_default();
    cfg.validate().map_err(|e| ApiError::invalid(e.to_string()))?;
    let Ok(_guard) = app.batch_gate.try_lock() else {
        return Err(ApiError::new(StatusCode::CONFLICT, "a batch is already running"));
    };
    let workers = req.workers.unwrap_or(app.cfg.workers);
    let store = app.store.clone();
    let summary = blocking(move || {
        let backend = spec.build();
        store.run_batch(&req.filter, backend.as_ref(), &cfg, workers)
    })
    .await??;
    Ok(Json(summary).into_response())
}

#[derive(Debug, Deserialize)]
struct WorklistQuery {
    status: Option<String>,
}

async fn get_worklist(State(app): State<AppState>, Query(q): Query<WorklistQuery>) -> ApiResult<Vec<ptx_core::store::StudySummary>> {
    let status = match q.status.as_deref() {
        None | Some("") | Some("all") => None,
        Some(s) => Some(s.parse::<StudyStatus>()?),
    };
    Ok(Json(app.store.worklist(status)))
}

async fn get_study(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<ptx_core::store::StudyEntry> {
    app.store.study(&id).map(Json).ok_or_else(|| StoreError::UnknownStudy(id).into())
}

async fn get_image(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let entry = app.store.study(&id).ok_or_else(|| ApiError::from(StoreError::UnknownStudy(id.clone())))?;
    let path = entry.record.image_path.clone();
    let bytes = blocking(move || std::fs::read(path))
        .await?
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, format!("image for {id} unavailable: {e}")))?;
    Ok(([(header::CONTENT_TYPE, PGM_CONTENT_TYPE)], bytes).into_response())
}

async fn post_adjudication(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: AdjudicationRequest = parse_body(&body)?;
    let store = app.store.clone();
    let entry = blocking(move || store.adjudicate(&id, req)).await??;
    Ok(Json(entry).into_response())
}

async fn get_metrics(State(app): State<AppState>) -> ApiResult<ptx_core::store::Metrics> {
    let store = app.store.clone();
    Ok(Json(blocking(move || store.metrics()).await?))
}

#[derive(Serialize)]
struct Health {
    studies: usize,
}

async fn get_health(State(app): State<AppState>) -> Json<Health> {
    Json(Health { studies: app.store.len() })
}

pub fn router(app: AppState) -> Router {
    let ui = app.cfg.ui_dir.clone();
    let api = Router::new()
        .route("/healthz", get(get_health))
        .route("/v1/manifest", post(post_manifest))
        .route("/v1/batch", post(post_batch))
        .route("/v1/worklist", get(get_worklist))
        .route("/v1/studies/{id}", get(get_study))
        .route("/v1/studies/{id}/image", get(get_image))
        .route("/v1/studies/{id}/adjudication", post(post_adjudication))
        .route("/v1/metrics", get(get_metrics))
        .with_state(app);
    match ui {
        Some(dir) => api.nest_service("/ui", ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serve `app` on `listener` until `shutdown` resolves, then drain in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}
