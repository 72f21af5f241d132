use std::collections::BTreeMap;

use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use ustrack_core::annot::AnnotError;
use ustrack_core::flow::FlowError;
use ustrack_core::jitterfilter::FilterError;
use ustrack_core::rstc::RstcError;

/// JSON error body: `{"error": ..., "fields": {...}, "rev": ...}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub fields: BTreeMap<String, String>,
    /// Current layer revision, reported on conflicts.
    pub rev: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            fields: BTreeMap::new(),
            rev: None,
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    /// 422 with one field-level message.
    pub fn field(field: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        let mut e = Self::invalid(format!("{field}: {message}"));
        e.fields.insert(field.to_string(), message);
        e
    }

    pub fn conflict(message: impl Into<String>, rev: u64) -> Self {
        let mut e = Self::new(StatusCode::CONFLICT, message);
        e.rev = Some(rev);
        e
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.fields.is_empty() {
            body["fields"] = json!(self.fields);
        }
        if let Some(rev) = self.rev {
            body["rev"] = rev.into();
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<AnnotError> for ApiError {
    fn from(e: AnnotError) -> Self {
        let message = e.to_string();
        match e {
            AnnotError::LayerNotFound(_) | AnnotError::LabelNotFound { .. } | AnnotError::FrameOutOfRange { .. } => {
                Self::not_found(message)
            }
            AnnotError::Flow(FlowError::FrameOutOfRange { .. }) => Self::not_found(message),
            AnnotError::DuplicateLayer(_) => Self::new(StatusCode::CONFLICT, message),
            AnnotError::EmptyName => Self::field("name", "must be non-empty"),
            AnnotError::PointOutOfBounds {
                x, y, width, height, ..
            } => {
                let mut e = Self::invalid(message);
                if !(0.0..=(width - 1) as f64).contains(&x) {
                    e.fields.insert("x".into(), format!("{x} outside [0, {}]", width - 1));
                }
                if !(0.0..=(height - 1) as f64).contains(&y) {
                    e.fields.insert("y".into(), format!("{y} outside [0, {}]", height - 1));
                }
                e
            }
            AnnotError::NonFinite { .. } => {
                let mut e = Self::invalid(message);
                e.fields.insert("x".into(), "must be finite".into());
                e.fields.insert("y".into(), "must be finite".into());
                e
            }
            AnnotError::Io { .. } | AnnotError::Parse { .. } | AnnotError::Version { .. } | AnnotError::Csv(_) => {
                Self::internal(message)
            }
            _ => Self::invalid(message),
        }
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        match e {
            FlowError::FrameOutOfRange { .. } => Self::not_found(e.to_string()),
            FlowError::Config(_) => Self::invalid(e.to_string()),
        }
    }
}

impl From<RstcError> for ApiError {
    fn from(e: RstcError) -> Self {
        match e {
            RstcError::Flow(f) => f.into(),
            RstcError::Alpha(_) => Self::field("alpha", e.to_string()),
            RstcError::Anchors { .. } => Self::invalid(e.to_string()),
        }
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        match e {
            FilterError::WindowTooLong { .. } | FilterError::WindowTooShort(_) | FilterError::WindowSeconds(_) => {
                Self::field("window", e.to_string())
            }
            FilterError::Annot(a) => a.into(),
            FilterError::Rstc(r) => r.into(),
            FilterError::Flow(f) => f.into(),
            other => Self::invalid(other.to_string()),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        match r {
            JsonRejection::JsonDataError(e) => {
                let detail = std::error::Error::source(&e).map_or_else(|| e.body_text(), |s| s.to_string());
                let mut err = Self::invalid(format!("invalid request body: {detail}"));
                if let Some(field) = offending_field(&detail) {
                    err.fields.insert(field, detail);
                }
                err
            }
            other => Self::new(other.status(), other.body_text()),
        }
    }
}

/// Extracts the field name from a deserializer message such as
/// ``missing field `x` `` or `x: invalid type ...`.
fn offending_field(detail: &str) -> Option<String> {
    if let Some(rest) = detail.split("missing field `").nth(1) {
        return rest.split('`').next().map(str::to_string);
    }
    let (path, _) = detail.split_once(": ")?;
    (!path.is_empty() && !path.contains(' ')).then(|| path.to_string())
}
