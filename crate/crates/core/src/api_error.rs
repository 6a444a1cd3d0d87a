//! Machine-readable error codes shared by every HTTP surface.

use serde::{Deserialize, Serialize};

use crate::package::PackageError;
use crate::store::StoreError;

/// The closed set of error codes. Each maps to exactly one HTTP status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    AuthRequired,
    AuthExpired,
    AuthForbidden,
    NotFound,
    BadRequest,
    PayloadTooLarge,
    MalformedContainer,
    ChecksumMismatch,
    EmptyPackage,
    SchemaViolation,
    InvalidPackage,
    ProjectNotDraft,
    ProjectNotCollecting,
    VersionMismatch,
    PackageConflict,
    StoreUnavailable,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 17] = [
        ErrorCode::AuthRequired,
        ErrorCode::AuthExpired,
        ErrorCode::AuthForbidden,
        ErrorCode::NotFound,
        ErrorCode::BadRequest,
        ErrorCode::PayloadTooLarge,
        ErrorCode::MalformedContainer,
        ErrorCode::ChecksumMismatch,
        ErrorCode::EmptyPackage,
        ErrorCode::SchemaViolation,
        ErrorCode::InvalidPackage,
        ErrorCode::ProjectNotDraft,
        ErrorCode::ProjectNotCollecting,
        ErrorCode::VersionMismatch,
        ErrorCode::PackageConflict,
        ErrorCode::StoreUnavailable,
        ErrorCode::Internal,
    ];

    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::AuthRequired | ErrorCode::AuthExpired => 401,
            ErrorCode::AuthForbidden => 403,
            ErrorCode::NotFound => 404,
            ErrorCode::BadRequest | ErrorCode::MalformedContainer | ErrorCode::ChecksumMismatch => 400,
            ErrorCode::PayloadTooLarge => 413,
            ErrorCode::EmptyPackage | ErrorCode::SchemaViolation | ErrorCode::InvalidPackage => 422,
            ErrorCode::ProjectNotDraft
            | ErrorCode::ProjectNotCollecting
            | ErrorCode::VersionMismatch
            | ErrorCode::PackageConflict => 409,
            ErrorCode::StoreUnavailable => 503,
            ErrorCode::Internal => 500,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::AuthRequired => "AUTH_REQUIRED",
            ErrorCode::AuthExpired => "AUTH_EXPIRED",
            ErrorCode::AuthForbidden => "AUTH_FORBIDDEN",
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::BadRequest => "BAD_REQUEST",
            ErrorCode::PayloadTooLarge => "PAYLOAD_TOO_LARGE",
            ErrorCode::MalformedContainer => "MALFORMED_CONTAINER",
            ErrorCode::ChecksumMismatch => "CHECKSUM_MISMATCH",
            ErrorCode::EmptyPackage => "EMPTY_PACKAGE",
            ErrorCode::SchemaViolation => "SCHEMA_VIOLATION",
            ErrorCode::InvalidPackage => "INVALID_PACKAGE",
            ErrorCode::ProjectNotDraft => "PROJECT_NOT_DRAFT",
            ErrorCode::ProjectNotCollecting => "PROJECT_NOT_COLLECTING",
            ErrorCode::VersionMismatch => "VERSION_MISMATCH",
            ErrorCode::PackageConflict => "PACKAGE_CONFLICT",
            ErrorCode::StoreUnavailable => "STORE_UNAVAILABLE",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

/// Error body: `{"code": "...", "message": "..."}` plus optional details
/// (e.g. a validation report).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("{code:?}: {message}")]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            details: None,
        }
    }

    pub fn with_details(mut self, details: serde_json::Value) -> Self {
        self.details = Some(details);
        self
    }

    pub fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(ErrorCode::NotFound, format!("{what} not found"))
    }

    pub fn status(&self) -> u16 {
        self.code.http_status()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::NoMaster { .. } | StoreError::StoreClosed => ErrorCode::StoreUnavailable,
            _ => ErrorCode::Internal,
        };
        ApiError::new(code, e.to_string())
    }
}

impl From<PackageError> for ApiError {
    fn from(e: PackageError) -> Self {
        let message = e.to_string();
        match e {
            PackageError::EmptyPackage => ApiError::new(ErrorCode::EmptyPackage, message),
            PackageError::SchemaViolation { entry, report } => {
                ApiError::new(ErrorCode::SchemaViolation, message).with_details(
                    serde_json::json!({"entry": entry, "violations": report.violations}),
                )
            }
            PackageError::ChecksumMismatch { entry } => ApiError::new(
                ErrorCode::ChecksumMismatch,
                message,
            )
            .with_details(serde_json::json!({ "entry": entry })),
            PackageError::MalformedContainer(_) | PackageError::MissingManifest => {
                ApiError::new(ErrorCode::MalformedContainer, message)
            }
            PackageError::TooLarge { .. } => ApiError::new(ErrorCode::PayloadTooLarge, message),
            PackageError::DanglingAssetRef { .. }
            | PackageError::DuplicateTestId(_)
            | PackageError::InvalidAssetPath(_)
            | PackageError::RecordsOutOfOrder { .. } => {
                ApiError::new(ErrorCode::InvalidPackage, message)
            }
        }
    }
}
