use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use serde_json::{json, Value};

use votelab_core::engine::{EngineError, ErrorClass};
use votelab_core::export::ExportError;
use votelab_core::store::StoreError;

/// A problem document: `{status, code, message, field?, errors?}` served as
/// `application/problem+json`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.to_string(),
            message: message.into(),
            field: None,
            errors: Vec::new(),
        }
    }

    pub fn unauthenticated(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "Unauthenticated", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "NotAuthorized", message)
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let status = match (&e, e.class()) {
            (EngineError::Storage(StoreError::StorageFull { .. }), _) => StatusCode::INSUFFICIENT_STORAGE,
            (_, ErrorClass::NotFound) => StatusCode::NOT_FOUND,
            (_, ErrorClass::Validation) => StatusCode::UNPROCESSABLE_ENTITY,
            (_, ErrorClass::Conflict) => StatusCode::CONFLICT,
            (_, ErrorClass::Forbidden) => StatusCode::FORBIDDEN,
            (_, ErrorClass::Internal) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %e, "engine failure");
        }
        let mut out = ApiError::new(status, e.code(), e.to_string());
        match &e {
            EngineError::InvalidDefinition(fields) => {
                out.field = fields.first().map(|f| f.field.clone());
                out.errors = fields
                    .iter()
                    .map(|f| json!({ "field": f.field, "message": f.message }))
                    .collect();
            }
            EngineError::ValidationFailed(v) => {
                out.errors = v
                    .0
                    .iter()
                    .map(|x| json!({ "code": x.code(), "message": x.to_string() }))
                    .collect();
            }
            _ => {}
        }
        out
    }
}

impl From<ExportError> for ApiError {
    fn from(e: ExportError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ExportError", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = serde_json::to_value(&self).unwrap_or_else(|_| json!({}));
        body["status"] = json!(self.status.as_u16());
        (
            self.status,
            [(header::CONTENT_TYPE, "application/problem+json")],
            body.to_string(),
        )
            .into_response()
    }
}

pub type ApiResult<T> = Result<T, ApiError>;
