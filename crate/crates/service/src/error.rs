use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use rapid_core::dsl::{ParseError, ParseErrorKind};
use rapid_core::labeling::LoopError;
use rapid_core::select::SelectError;
use serde::Serialize;
use serde_json::{json, Value};

/// The JSON error body every endpoint returns on failure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Value,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
                detail: Value::Null,
            },
        }
    }

    pub fn with_detail(mut self, detail: Value) -> Self {
        self.body.detail = detail;
        self
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, message)
    }

    pub fn unknown_session(id: &str) -> Self {
        Self::not_found("unknown_session", format!("no session {id:?}"))
            .with_detail(json!({ "id": id }))
    }

    pub fn parse(e: &ParseError) -> Self {
        let kind = match e.kind {
            ParseErrorKind::Syntax(_) => "syntax",
            ParseErrorKind::Rule(_) => "rule",
        };
        Self::bad_request("parse_error", e.to_string())
            .with_detail(json!({ "line": e.line, "column": e.column, "kind": kind }))
    }
}

impl From<LoopError> for ApiError {
    fn from(e: LoopError) -> Self {
        let message = e.to_string();
        match e {
            LoopError::Config(_) => Self::bad_request("invalid_config", message),
            LoopError::Learn { iteration, source } => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "learner_failure", message)
                    .with_detail(json!({ "iteration": iteration, "learner": source.to_string() }))
            }
            LoopError::Select(SelectError::UnknownStrategy { name, known }) => {
                Self::bad_request("unknown_strategy", message)
                    .with_detail(json!({ "name": name, "known": known }))
            }
            LoopError::Select(SelectError::Config(_)) => {
                Self::bad_request("invalid_config", message)
            }
            LoopError::Select(SelectError::PoolTooSmall { needed, available }) => {
                Self::new(StatusCode::UNPROCESSABLE_ENTITY, "pool_too_small", message)
                    .with_detail(json!({ "needed": needed, "available": available }))
            }
            LoopError::NotEnoughLabeled { needed, found } => Self::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "not_enough_labeled",
                message,
            )
            .with_detail(json!({ "needed": needed, "found": found })),
            LoopError::NotReady => Self::conflict("not_ready", message),
            LoopError::NoPendingBatch => Self::conflict("no_pending_batch", message),
            LoopError::Finished => Self::conflict("finished", message),
            LoopError::NotInBatch(id) => {
                Self::bad_request("not_in_batch", message).with_detail(json!({ "id": id }))
            }
            LoopError::UnknownLabel(l) => {
                Self::bad_request("unknown_label", message).with_detail(json!({ "label": l }))
            }
            LoopError::UnknownRecord(id) => {
                Self::bad_request("unknown_record", message).with_detail(json!({ "id": id }))
            }
            LoopError::Unlabeled(id) => {
                Self::bad_request("unlabeled_record", message).with_detail(json!({ "id": id }))
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}
