//! HTTP/JSON screening service behind the grid-placement UI.
//!
//! Clients upload an image to open a session, place an ETDRS grid to get
//! the 18 sector statistics, and classify the result with one of the
//! models found in the model directory. Sessions persist on disk and
//! survive restarts.
//!
//! | Method | Path | Result |
//! |---|---|---|
//! | `POST` | `/api/sessions` (multipart `image`) | `{session_id, width, height}` |
//! | `GET` | `/api/sessions` | session summaries |
//! | `GET` | `/api/sessions/{id}` | full session state |
//! | `GET` | `/api/sessions/{id}/image` | 8-bit PNG rendering |
//! | `PUT` | `/api/sessions/{id}/grid` | `{features, sector_stats, overlay}` |
//! | `POST` | `/api/sessions/{id}/classify` | `{label, decision_value, signed_distance, model_id}` |
//! | `GET` | `/api/models` | loaded models with kernel metadata |
//!
//! Errors are JSON `{error, message}` objects: 400 for malformed requests
//! and invalid grids, 404 for unknown sessions or models, 409 when
//! classifying before a grid is placed, and 422 with a `sector` field when
//! a grid leaves a sector without pixels.

pub mod api;
pub mod error;
pub mod models;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use error::ServiceError;
pub use models::{ModelInfo, ModelRegistry};
pub use store::SessionStore;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Root for persistent data; sessions live in `<data_dir>/sessions`.
    pub data_dir: PathBuf,
    /// Model directory; defaults to `<data_dir>/models`.
    pub models_dir: Option<PathBuf>,
    /// Built UI assets served for non-API paths.
    pub static_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            models_dir: None,
            static_dir: None,
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.data_dir.join("sessions")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.models_dir
            .clone()
            .unwrap_or_else(|| self.data_dir.join("models"))
    }
}

pub struct AppState {
    pub sessions: SessionStore,
    pub models: ModelRegistry,
    pub static_dir: Option<PathBuf>,
}

impl AppState {
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        Ok(Self {
            sessions: SessionStore::open(config.sessions_dir())?,
            models: ModelRegistry::new(Some(config.models_dir())),
            static_dir: config.static_dir.clone(),
        })
    }
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> Result<(), ServiceError> {
    let state = Arc::new(AppState::open(&config)?);
    for (path, reason) in state.sessions.skipped() {
        eprintln!("skipping session {}: {reason}", path.display());
    }
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await?;
    Ok(())
}
