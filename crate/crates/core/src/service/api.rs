//! HTTP routes. Request bodies are parsed by hand so malformed JSON gets
//! the same error envelope as every other failure.

use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use super::store::Demographics;
use super::{ActionError, AppState, NextSet, Rejection, Session, SessionState};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    field: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            field: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut error = json!({ "code": self.code, "message": self.message });
        if let Some(field) = self.field {
            error["field"] = json!(field);
        }
        (self.status, Json(json!({ "error": error }))).into_response()
    }
}

impl From<ActionError> for ApiError {
    fn from(e: ActionError) -> Self {
        match e {
            ActionError::Rejected(Rejection::Invalid { code, message, field }) => ApiError {
                status: StatusCode::BAD_REQUEST,
                code,
                message,
                field,
            },
            ActionError::Rejected(Rejection::Conflict { code, message }) => {
                ApiError::new(StatusCode::CONFLICT, code, message)
            }
            ActionError::Storage(err) => {
                tracing::error!(error = %err, "persisting session event failed");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", "could not persist the request")
            }
            ActionError::Engine(message) => {
                tracing::error!(%message, "engine failed");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_error", message)
            }
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

fn not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session {id:?}"))
}

/// Painting fields a participant may see.
#[derive(Debug, Serialize)]
struct ItemView<'a> {
    id: &'a str,
    title: &'a str,
    artist: &'a str,
    date: &'a str,
    medium: &'a str,
    dimensions: &'a str,
    description: &'a str,
    image_url: Option<String>,
}

fn item_views<'a>(state: &'a AppState, ids: &'a [String]) -> Vec<ItemView<'a>> {
    let collection = state.recommender().collection();
    ids.iter()
        .filter_map(|id| collection.index_of(id).map(|i| collection.painting(i)))
        .map(|p| ItemView {
            id: &p.id,
            title: &p.title,
            artist: &p.artist,
            date: &p.date,
            medium: &p.medium,
            dimensions: &p.dimensions,
            description: &p.description,
            image_url: (!p.image_ref.is_empty()).then(|| format!("/img/{}", p.image_ref)),
        })
        .collect()
}

fn status_body(session: &Session) -> serde_json::Value {
    json!({
        "session_id": session.id,
        "state": session.state(),
        "total_sets": session.engine_order.len(),
        "served": session.served.len(),
        "feedback": session.feedback.len(),
        "pending": session.pending(),
        "tolerances_submitted": session.tolerances.is_some(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    let mut app = Router::new()
        .route("/api/health", get(health))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}", get(session_status))
        .route("/api/session/{id}/elicitation", get(elicitation))
        .route("/api/session/{id}/ratings", post(ratings))
        .route("/api/session/{id}/tolerances", post(tolerances))
        .route("/api/session/{id}/next", get(next))
        .route("/api/session/{id}/feedback", post(feedback))
        .route("/api/export", get(export));
    if let Some(dir) = &state.config().image_dir {
        app = app.nest_service("/img", ServeDir::new(dir));
    }
    app.with_state(state)
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "sessions": state.session_count() }))
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let demographics: Demographics = if body.iter().all(u8::is_ascii_whitespace) {
        Demographics::default()
    } else {
        #[derive(Deserialize)]
        struct Body {
            #[serde(default)]
            demographics: Option<Demographics>,
            #[serde(default)]
            age: Option<u32>,
            #[serde(default)]
            gender: Option<String>,
        }
        let b: Body = parse_body(&body)?;
        b.demographics.unwrap_or(Demographics {
            age: b.age,
            gender: b.gender,
        })
    };
    let shared = state
        .create_session(demographics)
        .map_err(|e| ApiError::from(ActionError::Storage(e)))?;
    let session = shared.lock().await;
    let body = json!({
        "session_id": session.id,
        "state": session.state(),
        "total_sets": session.engine_order.len(),
        "elicitation": item_views(&state, &session.elicitation_items),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn session_status(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    let shared = state.session(&id).ok_or_else(|| not_found(&id))?;
    let session = shared.lock().await;
    Ok(Json(status_body(&session)))
}

async fn elicitation(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    let shared = state.session(&id).ok_or_else(|| not_found(&id))?;
    let session = shared.lock().await;
    Ok(Json(json!({
        "session_id": session.id,
        "items": item_views(&state, &session.elicitation_items),
    })))
}

async fn ratings(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<serde_json::Value> {
    #[derive(Deserialize)]
    struct Body {
        ratings: BTreeMap<String, i64>,
    }
    let shared = state.session(&id).ok_or_else(|| not_found(&id))?;
    let b: Body = parse_body(&body)?;
    let mut session = shared.lock().await;
    state.submit_ratings(&mut session, &b.ratings)?;
    Ok(Json(status_body(&session)))
}

async fn tolerances(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<serde_json::Value> {
    #[derive(Deserialize)]
    struct Body {
        beta: i64,
        xi: i64,
    }
    let shared = state.session(&id).ok_or_else(|| not_found(&id))?;
    let b: Body = parse_body(&body)?;
    let mut session = shared.lock().await;
    let (beta, xi) = state.submit_tolerances(&mut session, b.beta, b.xi)?;
    let mut out = status_body(&session);
    out["beta"] = json!(beta);
    out["xi"] = json!(xi);
    Ok(Json(out))
}

async fn next(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    let shared = state.session(&id).ok_or_else(|| not_found(&id))?;
    let mut session = shared.lock().await;
    let total = session.engine_order.len();
    Ok(Json(match state.next_set(&mut session)? {
        NextSet::Set { position, items } => json!({
            "done": false,
            "position": position,
            "total_sets": total,
            "items": item_views(&state, &items),
        }),
        NextSet::Done => json!({ "done": true, "total_sets": total }),
    }))
}

async fn feedback(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<serde_json::Value> {
    #[derive(Deserialize)]
    struct Body {
        accuracy: i64,
        diversity: i64,
        novelty: i64,
        serendipity: i64,
        #[serde(default)]
        position: Option<usize>,
    }
    let shared = state.session(&id).ok_or_else(|| not_found(&id))?;
    let b: Body = parse_body(&body)?;
    let mut session = shared.lock().await;
    let position = state.submit_feedback(&mut session, [b.accuracy, b.diversity, b.novelty, b.serendipity], b.position)?;
    let mut out = status_body(&session);
    out["recorded_position"] = json!(position);
    out["done"] = json!(session.state() == SessionState::Done);
    Ok(Json(out))
}

fn presented_token(headers: &HeaderMap) -> Option<&str> {
    if let Some(v) = headers.get("x-admin-token").and_then(|v| v.to_str().ok()) {
        return Some(v.trim());
    }
    headers
        .get(axum::http::header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(str::trim)
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

async fn export(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    let Some(expected) = state.config().admin_token.as_deref() else {
        return Err(ApiError::new(
            StatusCode::FORBIDDEN,
            "export_disabled",
            format!("set {} to enable the export", super::ADMIN_TOKEN_ENV),
        ));
    };
    match presented_token(&headers) {
        Some(t) if constant_time_eq(t.as_bytes(), expected.as_bytes()) => {}
        _ => return Err(ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token")),
    }
    Ok(Json(state.export().await).into_response())
}
