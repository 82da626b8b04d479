use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use clipseek::keyframe::KeyframeError;
use clipseek::motion::MotionError;
use clipseek::Error;

/// Machine-readable error codes. Clients match on these, never on messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErrorCode {
    BadRequest,
    EmptyArchive,
    BadArchive,
    TooManyFrames,
    EmptyName,
    NameTooLong,
    NoDecodableFrames,
    InconsistentFrames,
    DegeneratePolyline,
    BadCoordinates,
    NotFound,
    StorageFull,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            Self::BadRequest
            | Self::EmptyArchive
            | Self::BadArchive
            | Self::EmptyName
            | Self::NameTooLong
            | Self::DegeneratePolyline
            | Self::BadCoordinates => StatusCode::BAD_REQUEST,
            Self::TooManyFrames => StatusCode::PAYLOAD_TOO_LARGE,
            Self::NoDecodableFrames | Self::InconsistentFrames => StatusCode::UNPROCESSABLE_ENTITY,
            Self::NotFound => StatusCode::NOT_FOUND,
            Self::StorageFull => StatusCode::INSUFFICIENT_STORAGE,
            Self::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            http_status: code.status().as_u16(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(ErrorCode::BadRequest, message)
    }

    pub fn internal(err: impl std::fmt::Display) -> Self {
        log::error!("internal error: {err}");
        Self::new(ErrorCode::Internal, "internal server error")
    }
}

impl From<MotionError> for ApiError {
    fn from(e: MotionError) -> Self {
        let code = match e {
            MotionError::DegeneratePolyline | MotionError::TooFewPoints(_) => ErrorCode::DegeneratePolyline,
            MotionError::BadCoordinates(_) => ErrorCode::BadCoordinates,
            MotionError::Json(_) => ErrorCode::BadRequest,
            _ => return Self::internal(e),
        };
        Self::new(code, e.to_string())
    }
}

impl From<KeyframeError> for ApiError {
    fn from(e: KeyframeError) -> Self {
        let code = match e {
            KeyframeError::EmptySequence | KeyframeError::EmptyDirectory(_) => ErrorCode::EmptyArchive,
            KeyframeError::NoDecodableFrames(_) => ErrorCode::NoDecodableFrames,
            KeyframeError::DimensionMismatch(..) => ErrorCode::InconsistentFrames,
            KeyframeError::InvalidThreshold(_) => ErrorCode::BadRequest,
            _ => return Self::internal(e),
        };
        Self::new(code, e.to_string())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Keyframe(k) => return k.into(),
            Error::Motion(m) => return m.into(),
            Error::EmptyName => ErrorCode::EmptyName,
            Error::NameTooLong(_) => ErrorCode::NameTooLong,
            Error::NotFound { .. } => ErrorCode::NotFound,
            Error::StorageFull => ErrorCode::StorageFull,
            _ => return Self::internal(e),
        };
        Self::new(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}
