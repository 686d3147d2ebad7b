use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),

    #[error("{0}")]
    NotFound(String),

    #[error("storage failure: {0}")]
    Storage(#[from] std::io::Error),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ServiceError::BadRequest(_) => "illegal_argument_exception",
            ServiceError::NotFound(_) => "resource_not_found_exception",
            ServiceError::Storage(_) => "storage_exception",
        }
    }
}

impl From<fairsearch_core::Error> for ServiceError {
    fn from(e: fairsearch_core::Error) -> Self {
        match e {
            fairsearch_core::Error::Io(io) => ServiceError::Storage(io),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        let body = serde_json::json!({
            "error": {"type": self.kind(), "reason": self.to_string()},
            "status": status.as_u16(),
        });
        (status, Json(body)).into_response()
    }
}
