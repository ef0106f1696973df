use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use thiserror::Error;

use fafscreen_core::grid::{GridError, SectorId};
use fafscreen_core::numfmt;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("sector {0} has no in-bounds pixels")]
    EmptySector(SectorId),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

impl From<GridError> for ServiceError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::EmptySector(s) => ServiceError::EmptySector(s),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    sector: Option<SectorId>,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::EmptySector(_) | ServiceError::Unprocessable(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Storage(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::EmptySector(_) => "EmptySector",
            ServiceError::Conflict(_) => "Conflict",
            ServiceError::Unprocessable(_) => "Unprocessable",
            ServiceError::Storage(_) | ServiceError::Internal(_) => "Internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.kind(),
            message: self.to_string(),
            sector: match &self {
                ServiceError::EmptySector(s) => Some(*s),
                _ => None,
            },
        };
        let bytes = numfmt::to_json_vec(&body).unwrap_or_default();
        (
            self.status(),
            [(header::CONTENT_TYPE, "application/json")],
            bytes,
        )
            .into_response()
    }
}
