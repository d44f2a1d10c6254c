use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde_json::json;
use thiserror::Error;
use vdcook_core::FieldError;

use crate::CanonicalJson;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("invalid request")]
    Invalid(Vec<FieldError>),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict(_) => StatusCode::CONFLICT,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn field(field: &str, message: impl Into<String>) -> Self {
        ApiError::Invalid(vec![FieldError::new(field, message)])
    }
}

impl From<vdcook_core::Error> for ApiError {
    fn from(e: vdcook_core::Error) -> Self {
        use vdcook_core::Error as E;
        match e {
            E::InvalidRequest(errors) => ApiError::Invalid(errors),
            E::UnknownSource(_) | E::UnknownClip(_) | E::UnknownAnnotator(_) => ApiError::NotFound(e.to_string()),
            E::SourceExists(_) | E::AnnotatorExists(_) | E::SourceDisabled(_) | E::EmptyData => {
                ApiError::Conflict(e.to_string())
            }
            E::UnknownConnector(_)
            | E::InvalidAnnotator(_)
            | E::EmptyQuery
            | E::InvalidEdges
            | E::InvalidConditioning(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = match &self {
            ApiError::Invalid(errors) => json!({ "error": self.to_string(), "errors": errors }),
            _ => json!({ "error": self.to_string() }),
        };
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        CanonicalJson(status, body).into_response()
    }
}
