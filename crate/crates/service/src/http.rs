//! JSON-over-HTTP front end for one home.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::Mutex;

use crate::install::{DecisionRequest, InstallError, InstallRequest, InstallSession};
use crate::pipeline::Analyzer;

pub struct AppState {
    pub analyzer: Analyzer,
    pub session: Mutex<InstallSession>,
}

pub struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> ApiError {
        ApiError { status, code: code.into(), message: message.into() }
    }
}

impl From<InstallError> for ApiError {
    fn from(e: InstallError) -> ApiError {
        let status = match &e {
            InstallError::InvalidRequest | InstallError::Config(_) => StatusCode::BAD_REQUEST,
            InstallError::PendingSession(_) => StatusCode::CONFLICT,
            InstallError::UnknownDecisionId(_) | InstallError::UnknownApp(_) => StatusCode::NOT_FOUND,
            InstallError::Session(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "InvalidRequest", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": { "code": self.code, "message": self.message } }))).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/install", post(install))
        .route("/decision", post(decision))
        .route("/home", get(home))
        .route("/rules/{app}", get(rules))
        .route("/report/{id}", get(report))
        .with_state(state)
}

async fn install(State(st): State<Arc<AppState>>, body: Result<Json<InstallRequest>, JsonRejection>) -> ApiResult {
    let Json(req) = body?;
    let mut session = st.session.lock().await;
    let report = session.install(&st.analyzer, &req)?;
    Ok(Json(report).into_response())
}

async fn decision(State(st): State<Arc<AppState>>, body: Result<Json<DecisionRequest>, JsonRejection>) -> ApiResult {
    let Json(req) = body?;
    let ack = st.session.lock().await.decide(&req)?;
    Ok(Json(ack).into_response())
}

async fn home(State(st): State<Arc<AppState>>) -> ApiResult {
    Ok(Json(st.session.lock().await.summary()).into_response())
}

async fn rules(State(st): State<Arc<AppState>>, Path(app): Path<String>) -> ApiResult {
    let set = st.session.lock().await.rules_of(&app)?;
    Ok(([("content-type", "application/json")], cai_core::rules::serialize(&set)).into_response())
}

async fn report(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult {
    let session = st.session.lock().await;
    match session.report(&id) {
        Some(r) => Ok(Json(r).into_response()),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownDecisionId", format!("no report with id {id}"))),
    }
}
