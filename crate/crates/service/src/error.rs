use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use serde_json::json;

use safewalk_core::geo::GeoError;
use safewalk_core::riskmap::RiskError;
use safewalk_core::roadnet::RoadError;
use safewalk_core::router::RouteError;
use safewalk_core::siot::SiotError;
use safewalk_core::Error as CoreError;

/// Machine-readable error codes returned in every error body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    InvalidParameter,
    SchemaError,
    ParseError,
    EmptyMap,
    EmptyDevices,
    TooManyRowErrors,
    ReferentialIntegrity,
    NotFound,
    ScenarioNotFound,
    SnapshotNotFound,
    UnknownDevice,
    NoRoute,
    Internal,
}

pub const ERROR_CODES: &[&str] = &[
    "bad_request",
    "invalid_parameter",
    "schema_error",
    "parse_error",
    "empty_map",
    "empty_devices",
    "too_many_row_errors",
    "referential_integrity",
    "not_found",
    "scenario_not_found",
    "snapshot_not_found",
    "unknown_device",
    "no_route",
    "internal",
];

impl ErrorCode {
    pub fn status(self) -> StatusCode {
        match self {
            ErrorCode::NotFound | ErrorCode::ScenarioNotFound | ErrorCode::SnapshotNotFound | ErrorCode::UnknownDevice => StatusCode::NOT_FOUND,
            ErrorCode::NoRoute => StatusCode::CONFLICT,
            ErrorCode::Internal => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub field: Option<String>,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            code,
            message: message.into(),
            field: None,
        }
    }

    pub fn with_field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message)
    }

    pub fn invalid(field: &str, message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::InvalidParameter, message).with_field(field)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::Internal, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message, "field": self.field}});
        (self.code.status(), Json(body)).into_response()
    }
}

fn from_siot(e: SiotError) -> ApiError {
    let message = e.to_string();
    match e {
        SiotError::Schema { .. } => ApiError::new(ErrorCode::SchemaError, message).with_field("devices_csv"),
        SiotError::Empty => ApiError::new(ErrorCode::EmptyDevices, message).with_field("devices_csv"),
        SiotError::TooManyRowErrors { .. } => ApiError::new(ErrorCode::TooManyRowErrors, message).with_field("devices_csv"),
        SiotError::Csv(_) => ApiError::new(ErrorCode::ParseError, message).with_field("devices_csv"),
        SiotError::OwnerEdgeList { .. } => ApiError::new(ErrorCode::ParseError, message).with_field("owner_edges"),
        SiotError::UnknownOwner { .. } => ApiError::new(ErrorCode::ReferentialIntegrity, message).with_field("owner_edges"),
        SiotError::UnknownDevice(_) => ApiError::new(ErrorCode::UnknownDevice, message).with_field("ego_device"),
        SiotError::InvalidParameter { name, .. } => ApiError::invalid(name, message),
        SiotError::InvalidGraph(_) => ApiError::new(ErrorCode::InvalidParameter, message).with_field("owner_edges"),
        SiotError::Geo(g) => from_geo(g),
    }
}

fn from_geo(e: GeoError) -> ApiError {
    ApiError::new(ErrorCode::InvalidParameter, e.to_string())
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let message = e.to_string();
        match e {
            CoreError::Geo(g) => from_geo(g),
            CoreError::Road(RoadError::Parse { .. }) => ApiError::new(ErrorCode::ParseError, message).with_field("map"),
            CoreError::Road(RoadError::EmptyMap) => ApiError::new(ErrorCode::EmptyMap, message).with_field("map"),
            CoreError::Road(_) => ApiError::new(ErrorCode::InvalidParameter, message).with_field("map"),
            CoreError::Siot(s) | CoreError::Risk(RiskError::Siot(s)) => from_siot(s),
            CoreError::Risk(RiskError::InvalidParameter { name, .. }) => ApiError::invalid(name, message),
            CoreError::Risk(_) => ApiError::internal(message),
            CoreError::Route(RouteError::NoRoute { .. }) => ApiError::new(ErrorCode::NoRoute, message),
            CoreError::Route(_) | CoreError::Community(_) => ApiError::internal(message),
            CoreError::InvalidParameter { name, .. } => ApiError::invalid(name, message),
        }
    }
}
