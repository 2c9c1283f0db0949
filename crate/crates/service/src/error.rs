use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use splatclimate::climate::ClimateError;
use splatclimate::pipeline::PipelineError;
use splatclimate::scene::SceneError;
use splatclimate::style::StyleError;

/// Error payload: `{"error": {"code", "message", "field"?}}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into(), field: None }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn invalid_field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError { field: Some(field.into()), ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_param", message) }
    }

    pub fn no_scene() -> Self {
        ApiError::new(StatusCode::CONFLICT, "no_scene", "no scene loaded")
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.field {
            Some(field) => write!(f, "{} ({field}): {}", self.code, self.message),
            None => write!(f, "{}: {}", self.code, self.message),
        }
    }
}

impl std::error::Error for ApiError {}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status;
        (status, Json(serde_json::json!({ "error": self }))).into_response()
    }
}

impl From<ClimateError> for ApiError {
    fn from(e: ClimateError) -> Self {
        match e.field_name() {
            Some(field) => ApiError::invalid_field(field, e.to_string()),
            None => ApiError::bad_request(e.to_string()),
        }
    }
}

impl From<SceneError> for ApiError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::InvalidCamera(msg) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_camera", msg),
            other => ApiError::new(StatusCode::BAD_REQUEST, "invalid_scene", other.to_string()),
        }
    }
}

impl From<StyleError> for ApiError {
    fn from(e: StyleError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_style", e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Scene(e) => e.into(),
            PipelineError::Climate(e) => e.into(),
            PipelineError::Style(e) => e.into(),
            PipelineError::Raster(e) => ApiError::new(StatusCode::BAD_REQUEST, "render_failed", e.to_string()),
        }
    }
}
