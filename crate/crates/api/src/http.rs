//! JSON-over-HTTP routes. All state sits behind one mutex, which makes the
//! service a single writer for the graph and the transport ledger.

use std::sync::{Arc, Mutex};

use assistant_core::feedback::Reason;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::service::{Assistant, ErrorKind, ServiceError};

pub const SESSION_HEADER: &str = "x-session";

pub type SharedState = Arc<Mutex<Assistant>>;

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0.kind {
            ErrorKind::Validation => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = json!({ "error": { "code": self.0.code, "message": self.0.message } });
        (status, Json(body)).into_response()
    }
}

type ApiResult = Result<Json<Value>, ApiError>;

fn invalid(message: impl Into<String>) -> ApiError {
    ApiError(ServiceError::validation("invalid_request", message))
}

fn session_id(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .ok_or_else(|| {
            ApiError(ServiceError::validation(
                "missing_session",
                "the X-Session header is required",
            ))
        })
}

fn lock(state: &SharedState) -> std::sync::MutexGuard<'_, Assistant> {
    // a panicked handler cannot leave a half-applied request behind, since
    // caches are only touched after the graph batch commits
    state.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn to_json<T: serde::Serialize>(value: &T) -> ApiResult {
    serde_json::to_value(value)
        .map(Json)
        .map_err(|e| ApiError(ServiceError::internal(e.to_string())))
}

/// Parses a JSON body, reporting malformed bodies in the error envelope.
fn body<T: serde::de::DeserializeOwned>(raw: &str) -> Result<T, ApiError> {
    serde_json::from_str(raw).map_err(|e| invalid(format!("invalid JSON body: {e}")))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/api/sessions", post(open_session))
        .route("/api/sessions/{id}/close", post(close))
        .route("/api/forecasts", get(forecasts))
        .route("/api/forecasts/{id}/edit", post(edit))
        .route("/api/forecasts/{id}/explanation", get(explanation))
        .route("/api/forecasts/{id}/options", get(options))
        .route("/api/explanations/{id}/remove-feature", post(remove_feature))
        .route("/api/snapshots/{id}/select", post(select))
        .route("/api/feedback/reason", post(reason))
        .route("/api/reasons", get(reasons))
        .route("/api/al/suggestions", get(suggestions))
        .route("/api/kg/trace/{id}", get(trace))
        .fallback(|| async { ApiError(ServiceError::not_found("not_found", "no such route")) })
        .with_state(state)
}

#[derive(Deserialize, Default)]
struct OpenSessionBody {
    user_id: Option<String>,
}

async fn open_session(State(s): State<SharedState>, raw: String) -> ApiResult {
    let b: OpenSessionBody = if raw.trim().is_empty() {
        OpenSessionBody::default()
    } else {
        body(&raw)?
    };
    let token = lock(&s).open_session(b.user_id);
    to_json(&token)
}

async fn close(State(s): State<SharedState>, Path(id): Path<String>) -> ApiResult {
    let n = lock(&s).close_session(&id)?;
    Ok(Json(json!({ "implicit_approvals": n })))
}

#[derive(Deserialize)]
struct ForecastQuery {
    date: Option<String>,
    material: Option<String>,
}

async fn forecasts(State(s): State<SharedState>, headers: HeaderMap, Query(q): Query<ForecastQuery>) -> ApiResult {
    let session = session_id(&headers)?;
    let date = q.date.ok_or_else(|| invalid("query parameter `date` is required"))?;
    let date =
        NaiveDate::parse_from_str(&date, "%Y-%m-%d").map_err(|e| invalid(format!("invalid date `{date}`: {e}")))?;
    let material = q
        .material
        .ok_or_else(|| invalid("query parameter `material` is required"))?;
    let views = lock(&s).get_forecasts(&session, date, &material)?;
    to_json(&views)
}

#[derive(Deserialize)]
struct EditBody {
    quantity: f64,
}

async fn edit(State(s): State<SharedState>, headers: HeaderMap, Path(id): Path<String>, raw: String) -> ApiResult {
    let session = session_id(&headers)?;
    let b: EditBody = body(&raw)?;
    let feedback_id = lock(&s).edit_forecast(&session, &id, b.quantity)?;
    Ok(Json(json!({ "feedback_id": feedback_id })))
}

async fn explanation(State(s): State<SharedState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let session = session_id(&headers)?;
    let view = lock(&s).get_explanation(&session, &id)?;
    to_json(&view)
}

#[derive(Deserialize)]
struct RemoveFeatureBody {
    feature_name: String,
}

async fn remove_feature(
    State(s): State<SharedState>,
    headers: HeaderMap,
    Path(id): Path<String>,
    raw: String,
) -> ApiResult {
    let session = session_id(&headers)?;
    let b: RemoveFeatureBody = body(&raw)?;
    let feedback_id = lock(&s).remove_feature(&session, &id, &b.feature_name)?;
    Ok(Json(json!({ "feedback_id": feedback_id })))
}

async fn options(State(s): State<SharedState>, headers: HeaderMap, Path(id): Path<String>) -> ApiResult {
    let session = session_id(&headers)?;
    let view = lock(&s).get_options(&session, &id)?;
    to_json(&view)
}

#[derive(Deserialize)]
struct SelectBody {
    option_id: String,
    /// New quantity, read only by adjust_quantity options.
    quantity: Option<f64>,
}

async fn select(State(s): State<SharedState>, headers: HeaderMap, Path(id): Path<String>, raw: String) -> ApiResult {
    let session = session_id(&headers)?;
    let b: SelectBody = body(&raw)?;
    let view = lock(&s).select_option(&session, &id, &b.option_id, b.quantity)?;
    to_json(&view)
}

#[derive(Deserialize)]
struct ReasonBody {
    snapshot_id: String,
    option_id: String,
    reason_code: Option<String>,
    reason_text: Option<String>,
}

async fn reason(State(s): State<SharedState>, headers: HeaderMap, raw: String) -> ApiResult {
    let session = session_id(&headers)?;
    let b: ReasonBody = body(&raw)?;
    let reason = match (b.reason_code, b.reason_text) {
        (Some(code), None) => Reason::Code(code),
        (None, Some(text)) => Reason::FreeText(text),
        _ => return Err(invalid("exactly one of `reason_code` and `reason_text` is required")),
    };
    let feedback_id = lock(&s).record_reason(&session, &b.snapshot_id, &b.option_id, reason)?;
    Ok(Json(json!({ "feedback_id": feedback_id })))
}

async fn reasons(State(s): State<SharedState>) -> ApiResult {
    to_json(&lock(&s).reasons())
}

#[derive(Deserialize)]
struct SuggestionQuery {
    k: Option<String>,
}

async fn suggestions(State(s): State<SharedState>, Query(q): Query<SuggestionQuery>) -> ApiResult {
    let k = match q.k {
        None => 10,
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| invalid(format!("invalid k `{raw}`")))?,
    };
    let ranked = lock(&s).al_suggestions(k)?;
    to_json(&ranked)
}

async fn trace(State(s): State<SharedState>, Path(id): Path<String>) -> ApiResult {
    let t = lock(&s).trace(&id)?;
    to_json(&t)
}
