use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use scenariokit::schema::Finding;
use scenariokit::PipelineError;
use serde::Serialize;

/// Error body: `{code, message, findings?}`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub findings: Option<Vec<Finding>>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { code: code.into(), message: message.into(), findings: None } }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_request", message)
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "not_found" => StatusCode::NOT_FOUND,
        "invalid_request" | "unknown_backend" => StatusCode::BAD_REQUEST,
        "worksheet_invalid" | "validation_failed" => StatusCode::UNPROCESSABLE_ENTITY,
        "stage_order" | "review_state" | "conflict" => StatusCode::CONFLICT,
        "generation_failed" | "backend_error" => StatusCode::BAD_GATEWAY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let code = e.code();
        ApiError {
            status: status_for(code),
            body: ErrorBody {
                code: code.into(),
                message: e.to_string(),
                findings: e.findings().map(|r| r.findings.clone()),
            },
        }
    }
}

impl From<scenariokit::StoreError> for ApiError {
    fn from(e: scenariokit::StoreError) -> Self {
        PipelineError::from(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
