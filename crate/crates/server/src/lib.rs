//! Session-oriented HTTP JSON API over the segmentation playground.
//!
//! Sessions live in memory behind a bounded LRU; each session has its own lock
//! so requests to distinct sessions proceed concurrently.

mod dto;
mod error;
mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::StatusCode;
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use probattn::playground::{init_session, BBox, ClickEvent, ImageTensor, Mask, SegmentationSession, SessionConfig};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use tower_http::trace::TraceLayer;

pub use dto::{ConfigPatch, CreateResponse, MaskDto, SessionStateDto};
pub use error::ApiError;
pub use store::{Lookup, SessionStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// Sessions kept before the least recently used one is evicted.
    pub max_sessions: usize,
    /// Largest accepted image side before downsampling.
    pub max_image_side: usize,
    /// Largest accepted request body.
    pub max_body_bytes: usize,
    /// Defaults for new sessions; per-request config parts override them.
    pub session: SessionConfig,
    /// Seed for session ids; drawn from the OS when absent.
    pub seed: Option<u64>,
    /// Directory of static UI assets served under `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_sessions: 64,
            max_image_side: 1024,
            max_body_bytes: 32 << 20,
            session: SessionConfig::default(),
            seed: None,
            static_dir: None,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<SessionStore>,
    config: Arc<ServerConfig>,
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        AppState {
            store: Arc::new(SessionStore::new(config.max_sessions, config.seed)),
            config: Arc::new(config),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.config.max_body_bytes;
    let static_dir = state.config.static_dir.clone();
    let api = Router::new()
        .route("/api/healthz", get(healthz))
        .route("/api/session", post(create))
        .route("/api/session/{id}", get(get_state))
        .route("/api/session/{id}/click", post(click))
        .route("/api/session/{id}/undo", post(undo))
        .route("/api/session/{id}/config", patch(patch_config))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state);
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(TraceLayer::new_for_http())
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServerConfig,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(AppState::new(config));
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

struct Upload {
    image: Vec<u8>,
    gt: Option<Vec<u8>>,
    bbox: Option<BBox>,
    config: Option<serde_json::Value>,
}

async fn read_upload(mut form: Multipart) -> Result<Upload, ApiError> {
    let mut upload = Upload {
        image: Vec::new(),
        gt: None,
        bbox: None,
        config: None,
    };
    let mut have_image = false;
    while let Some(field) = form.next_field().await.map_err(ApiError::multipart)? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(ApiError::multipart)?;
        match name.as_str() {
            "image" => {
                upload.image = bytes.to_vec();
                have_image = true;
            }
            "gt" | "mask" => upload.gt = Some(bytes.to_vec()),
            "bbox" => upload.bbox = Some(serde_json::from_slice(&bytes).map_err(|e| ApiError::invalid(format!("bbox: {e}")))?),
            "config" => upload.config = Some(serde_json::from_slice(&bytes).map_err(|e| ApiError::invalid(format!("config: {e}")))?),
            other => return Err(ApiError::bad_request("unknown_field", format!("unexpected form field {other:?}"))),
        }
    }
    if !have_image {
        return Err(ApiError::bad_request("missing_image", "the form needs an image part"));
    }
    Ok(upload)
}

async fn create(State(state): State<AppState>, form: Multipart) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let upload = read_upload(form).await?;
    let cfg = state.config.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<SegmentationSession, ApiError> {
        let image = ImageTensor::decode(&upload.image).map_err(|e| ApiError::bad_request("bad_image", e.to_string()))?;
        if image.height() > cfg.max_image_side || image.width() > cfg.max_image_side {
            return Err(ApiError::too_large(image.height(), image.width(), cfg.max_image_side));
        }
        let gt = match &upload.gt {
            Some(bytes) => Some(Mask::decode(bytes).map_err(|e| ApiError::bad_request("bad_mask", e.to_string()))?),
            None => None,
        };
        let config = match upload.config {
            Some(patch) => dto::merge_config(&cfg.session, patch)?,
            None => cfg.session.clone(),
        };
        Ok(init_session(&image, gt.as_ref(), upload.bbox, &config)?)
    })
    .await
    .map_err(ApiError::join)??;
    let dto = SessionStateDto::of("", &session);
    let id = state.store.insert(session);
    Ok((StatusCode::CREATED, Json(CreateResponse { id: id.clone(), state: dto.with_id(id) })))
}

async fn get_state(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStateDto>, ApiError> {
    let handle = state.store.get(&id)?;
    let session = handle.lock().await;
    Ok(Json(SessionStateDto::of(&id, &session)))
}

/// Runs `op` on the session under its lock on the blocking pool.
async fn mutate<F>(state: &AppState, id: &str, op: F) -> Result<Json<SessionStateDto>, ApiError>
where
    F: FnOnce(&mut SegmentationSession) -> Result<(), ApiError> + Send + 'static,
{
    let handle = state.store.get(id)?;
    let mut guard = handle.lock_owned().await;
    let id = id.to_string();
    tokio::task::spawn_blocking(move || {
        op(&mut guard)?;
        Ok(Json(SessionStateDto::of(&id, &guard)))
    })
    .await
    .map_err(ApiError::join)?
}

async fn click(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<ClickEvent>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<SessionStateDto>, ApiError> {
    let Json(click) = body.map_err(ApiError::json)?;
    mutate(&state, &id, move |s| Ok(s.apply_click(click)?)).await
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionStateDto>, ApiError> {
    mutate(&state, &id, |s| Ok(s.undo()?)).await
}

async fn patch_config(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<serde_json::Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<SessionStateDto>, ApiError> {
    let Json(body) = body.map_err(ApiError::json)?;
    let patch = ConfigPatch::parse(body)?;
    mutate(&state, &id, move |s| {
        let config = dto::merge_config(s.config(), patch.changes)?;
        Ok(s.set_config(config, patch.replay)?)
    })
    .await
}
