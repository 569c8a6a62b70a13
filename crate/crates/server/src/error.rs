use axum::extract::multipart::MultipartError;
use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use probattn::Error;
use serde_json::json;

/// An error response `{"error": {"code", "message"}}`.
#[derive(Debug, thiserror::Error)]
#[error("{status} {code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn too_large(h: usize, w: usize, max: usize) -> Self {
        ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            "image_too_large",
            format!("image is {h}x{w}; the limit is {max}x{max}"),
        )
    }

    pub(crate) fn multipart(e: MultipartError) -> Self {
        ApiError::new(e.status(), "bad_form", e.body_text())
    }

    pub(crate) fn json(e: JsonRejection) -> Self {
        let status = match e.status() {
            StatusCode::BAD_REQUEST | StatusCode::UNSUPPORTED_MEDIA_TYPE => e.status(),
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, "bad_json", e.body_text())
    }

    pub(crate) fn join(e: tokio::task::JoinError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::OutOfBounds { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "out_of_bounds"),
            Error::InvalidBBox(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_bbox"),
            Error::InvalidConfig(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_config"),
            Error::NothingToUndo => (StatusCode::CONFLICT, "nothing_to_undo"),
            Error::Image(_) => (StatusCode::BAD_REQUEST, "bad_image"),
            Error::ShapeMismatch(_) | Error::DimensionMismatch { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "shape_mismatch"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "engine"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}
