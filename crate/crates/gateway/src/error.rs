//! Wire error type. Each library error variant maps to one code.

use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use emotrail_core::affect::FauParseError;
use emotrail_core::catalog::CatalogError;
use emotrail_core::selfreport::SelfReportError;
use emotrail_core::session::TransitionError;
use emotrail_core::store::StoreError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    NotFound,
    UnknownToken,
    UnknownEmotion,
    UnknownPainting,
    InvalidBody,
    InvalidTransition,
    EmotionReuse,
    NoReports,
    AlreadyInterviewed,
    ReportMismatch,
    SequenceGap,
    SessionDeleted,
    AlreadyDecided,
    NotReady,
    OutOfRange,
    SliderOutOfRange,
    TextTooLong,
    MappingMismatch,
    FauEncoding,
    FauHeaderMismatch,
    FauRowParse,
    FauRange,
    FauNonMonotoneTimestamp,
    Internal,
}

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        use ErrorCode::*;
        match self {
            NotFound | UnknownToken => StatusCode::NOT_FOUND,
            SessionDeleted => StatusCode::GONE,
            InvalidBody => StatusCode::BAD_REQUEST,
            InvalidTransition | EmotionReuse | NoReports | AlreadyInterviewed | SequenceGap
            | AlreadyDecided | NotReady => StatusCode::CONFLICT,
            UnknownEmotion | UnknownPainting | ReportMismatch | OutOfRange | SliderOutOfRange
            | TextTooLong | MappingMismatch | FauEncoding | FauHeaderMismatch | FauRowParse
            | FauRange | FauNonMonotoneTimestamp => StatusCode::UNPROCESSABLE_ENTITY,
            Internal => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> ApiError {
        ApiError {
            code,
            message: message.into(),
            session_id: None,
        }
    }

    pub fn for_session(mut self, session_id: &str) -> ApiError {
        self.session_id = Some(session_id.to_owned());
        self
    }

    pub fn not_found(session_id: &str) -> ApiError {
        ApiError::new(ErrorCode::NotFound, format!("session `{session_id}` not found"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.code.status(), Json(self)).into_response()
    }
}

impl From<FauParseError> for ApiError {
    fn from(e: FauParseError) -> ApiError {
        let code = match e {
            FauParseError::Encoding => ErrorCode::FauEncoding,
            FauParseError::HeaderMismatch => ErrorCode::FauHeaderMismatch,
            FauParseError::RowParse { .. } => ErrorCode::FauRowParse,
            FauParseError::Range { .. } => ErrorCode::FauRange,
            FauParseError::NonMonotoneTimestamp { .. } => ErrorCode::FauNonMonotoneTimestamp,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<TransitionError> for ApiError {
    fn from(e: TransitionError) -> ApiError {
        let code = match e {
            TransitionError::SequenceMismatch { .. } => ErrorCode::SequenceGap,
            TransitionError::InvalidTransition { .. } => ErrorCode::InvalidTransition,
            TransitionError::EmotionReuse(_) => ErrorCode::EmotionReuse,
            TransitionError::NoReports => ErrorCode::NoReports,
            TransitionError::ReportMismatch(_) => ErrorCode::ReportMismatch,
            TransitionError::Fau(f) => return f.into(),
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<SelfReportError> for ApiError {
    fn from(e: SelfReportError) -> ApiError {
        let code = match e {
            SelfReportError::OutOfRange(_) => ErrorCode::OutOfRange,
            SelfReportError::SliderOutOfRange { .. } => ErrorCode::SliderOutOfRange,
            SelfReportError::TextTooLong(_) => ErrorCode::TextTooLong,
            SelfReportError::MappingMismatch { .. } => ErrorCode::MappingMismatch,
            SelfReportError::UnknownEmotion(_) => ErrorCode::UnknownEmotion,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<CatalogError> for ApiError {
    fn from(e: CatalogError) -> ApiError {
        let code = match e {
            CatalogError::UnknownEmotion(_) => ErrorCode::UnknownEmotion,
            CatalogError::UnknownPainting(_) => ErrorCode::UnknownPainting,
            CatalogError::Parse(_) | CatalogError::Validation(_) => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> ApiError {
        let (code, session_id) = match &e {
            StoreError::NotFound(id) | StoreError::UnknownSession(id) => {
                (ErrorCode::NotFound, Some(id.clone()))
            }
            StoreError::InvalidSessionId(_) => (ErrorCode::NotFound, None),
            StoreError::SessionDeleted => (ErrorCode::SessionDeleted, None),
            StoreError::SequenceGap { session_id, .. } => {
                (ErrorCode::SequenceGap, Some(session_id.clone()))
            }
            StoreError::AlreadyDecided(id) => (ErrorCode::AlreadyDecided, Some(id.clone())),
            StoreError::NotReady { session_id, .. } => {
                (ErrorCode::NotReady, Some(session_id.clone()))
            }
            StoreError::Io(_)
            | StoreError::BadBatch
            | StoreError::Corrupt { .. }
            | StoreError::Replay(_) => (ErrorCode::Internal, None),
        };
        ApiError {
            code,
            message: e.to_string(),
            session_id,
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> ApiError {
        ApiError::new(ErrorCode::InvalidBody, e.body_text())
    }
}
