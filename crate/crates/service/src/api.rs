//! HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::MultipartRejection;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fafscreen_core::grid::{Eye, GridSpec};
use fafscreen_core::numfmt;

use crate::error::ServiceError;
use crate::AppState;

/// Largest accepted upload; a 16-bit 4096×4096 PGM is 32 MiB.
pub const MAX_UPLOAD_BYTES: usize = 64 << 20;

/// JSON response whose floats carry 17 significant digits.
pub struct Json17<T>(pub StatusCode, pub T);

impl<T: Serialize> IntoResponse for Json17<T> {
    fn into_response(self) -> Response {
        match numfmt::to_json_vec(&self.1) {
            Ok(bytes) => (self.0, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
            Err(e) => ServiceError::Internal(e.to_string()).into_response(),
        }
    }
}

fn ok<T: Serialize>(value: T) -> Json17<T> {
    Json17(StatusCode::OK, value)
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridRequest {
    cx: f64,
    cy: f64,
    r1: f64,
    r2: f64,
    r3: f64,
    laterality: Eye,
    #[serde(default)]
    invert_nasal: bool,
}

impl From<GridRequest> for GridSpec {
    fn from(r: GridRequest) -> Self {
        GridSpec {
            center_x: r.cx,
            center_y: r.cy,
            r1: r.r1,
            r2: r.r2,
            r3: r.r3,
            laterality: r.laterality,
            invert_nasal: r.invert_nasal,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassifyRequest {
    model_id: String,
}

#[derive(Serialize)]
struct Created {
    session_id: String,
    width: usize,
    height: usize,
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/image", get(session_image))
        .route("/api/sessions/{id}/grid", put(set_grid))
        .route("/api/sessions/{id}/classify", post(classify))
        .route("/api/models", get(list_models))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state.clone());
    match &state.static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Runs blocking session work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<impl IntoResponse, ServiceError> {
    let mut multipart = multipart.map_err(|e| ServiceError::BadRequest(e.body_text()))?;
    let mut upload = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ServiceError::BadRequest(e.body_text()))?
    {
        let is_image = field.name() == Some("image") || field.file_name().is_some();
        if !is_image {
            continue;
        }
        let filename = field.file_name().unwrap_or("upload").to_string();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ServiceError::BadRequest(e.body_text()))?;
        upload = Some((filename, bytes));
        break;
    }
    let (filename, bytes) =
        upload.ok_or_else(|| ServiceError::BadRequest("multipart body has no image field".into()))?;
    let summary = blocking(move || state.sessions.create(&filename, &bytes)).await?;
    Ok(Json17(
        StatusCode::CREATED,
        Created {
            session_id: summary.session_id,
            width: summary.width,
            height: summary.height,
        },
    ))
}

async fn list_sessions(State(state): State<Arc<AppState>>) -> Result<impl IntoResponse, ServiceError> {
    let summaries = blocking(move || Ok(state.sessions.summaries())).await?;
    Ok(ok(summaries))
}

async fn get_session(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let session = state.sessions.get(&id)?;
    let snapshot = blocking(move || Ok(session.lock().expect("session lock").state().clone())).await?;
    Ok(ok(snapshot))
}

async fn session_image(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let session = state.sessions.get(&id)?;
    let png = blocking(move || {
        session
            .lock()
            .expect("session lock")
            .image()
            .render_png_8bit()
            .map_err(|e| ServiceError::Internal(e.to_string()))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png))
}

async fn set_grid(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let session = state.sessions.get(&id)?;
    let grid: GridSpec = parse_body::<GridRequest>(&body)?.into();
    let evaluation = blocking(move || session.lock().expect("session lock").set_grid(grid)).await?;
    Ok(ok(evaluation))
}

async fn classify(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let session = state.sessions.get(&id)?;
    let request: ClassifyRequest = parse_body(&body)?;
    let result = blocking(move || {
        let model = state
            .models
            .get(&request.model_id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown model '{}'", request.model_id)))?;
        session
            .lock()
            .expect("session lock")
            .classify(&request.model_id, &model)
    })
    .await?;
    Ok(ok(result))
}

async fn list_models(State(state): State<Arc<AppState>>) -> Result<impl IntoResponse, ServiceError> {
    let models = blocking(move || Ok(state.models.list())).await?;
    Ok(ok(models))
}
