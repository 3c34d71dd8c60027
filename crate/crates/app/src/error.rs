use serde::Serialize;
use serde_json::{json, Value};

use crbgate_core::Error as CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Validation,
    NotFound,
    StaleRevision,
    Unlocalizable,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::Validation => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::StaleRevision => 409,
            ErrorCode::Unlocalizable => 422,
            ErrorCode::Internal => 500,
        }
    }
}

/// Structured failure shared by the CLI (printed to stderr) and the service
/// (response body).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppError {
    pub code: ErrorCode,
    pub message: String,
    pub detail: Value,
}

impl AppError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        AppError { code, message: message.into(), detail: Value::Null }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        AppError::new(ErrorCode::Validation, message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        AppError::new(ErrorCode::Internal, message)
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error serializes")
    }
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for AppError {}

impl From<CoreError> for AppError {
    fn from(e: CoreError) -> Self {
        let mut detail = json!({ "kind": e.kind() });
        let code = match &e {
            CoreError::SingularFim { eigenvalues } => {
                detail["eigenvalues"] = json!(eigenvalues);
                ErrorCode::Unlocalizable
            }
            CoreError::InsufficientAnchors { got } => {
                detail["anchors"] = json!(got);
                ErrorCode::Unlocalizable
            }
            CoreError::DegenerateDistance { anchor_id, .. } => {
                detail["anchor_id"] = json!(anchor_id);
                ErrorCode::Unlocalizable
            }
            _ => ErrorCode::Validation,
        };
        AppError { code, message: e.to_string(), detail }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::internal(e.to_string())
    }
}
