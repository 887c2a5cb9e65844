//! HTTP front end over [`SessionManager`].
//!
//! Routes:
//! - `POST /sessions` with `{"list_id", "participant_id"}`
//! - `GET /sessions/{id}/state`, `GET /sessions/{id}/history`
//! - `POST /sessions/{id}/action` with `{"action": "move(A, area_p1, bottom_left)"}`
//! - `POST /sessions/{id}/feedback` with `{"answers": [4, 5, 3]}`
//! - `GET /sessions/{id}/events`, a server-sent stream of `turn` events

use std::collections::HashMap;
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::Stream;
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;

use einstein_core::error::SessionError;
use einstein_core::session::{HistoryEntry, SessionManager, StateView, SubmitResult};

#[derive(Clone)]
pub struct AppState {
    manager: Arc<SessionManager>,
    channels: Arc<Mutex<HashMap<String, broadcast::Sender<HistoryEntry>>>>,
}

impl AppState {
    pub fn new(manager: SessionManager) -> AppState {
        AppState {
            manager: Arc::new(manager),
            channels: Arc::default(),
        }
    }

    fn channel(&self, id: &str) -> broadcast::Sender<HistoryEntry> {
        self.channels
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| broadcast::channel(64).0)
            .clone()
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    pub list_id: String,
    pub participant_id: String,
}

#[derive(Debug, Deserialize)]
pub struct ActionRequest {
    pub action: String,
}

#[derive(Debug, Deserialize)]
pub struct FeedbackRequest {
    pub answers: Vec<u8>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub error: String,
}

pub struct ApiError(SessionError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            SessionError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            SessionError::TurnViolation => (StatusCode::CONFLICT, "turn_violation"),
            SessionError::Parse(_) => (StatusCode::BAD_REQUEST, "parse_error"),
            SessionError::Illegal(_) => (StatusCode::UNPROCESSABLE_ENTITY, "illegal_action"),
            SessionError::PreconditionFailed(_) => (StatusCode::CONFLICT, "precondition_failed"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        let body = ErrorBody {
            kind: kind.to_string(),
            error: self.0.to_string(),
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Session calls do file I/O and run the agent, so they leave the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, SessionError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(SessionError::Corrupt(e.to_string())))?
        .map_err(ApiError)
}

async fn create(
    State(st): State<AppState>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<StateView>), ApiError> {
    let m = st.manager.clone();
    let view = blocking(move || m.create_session(&req.list_id, &req.participant_id)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_state(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<StateView> {
    let m = st.manager.clone();
    Ok(Json(blocking(move || m.get_state(&id)).await?))
}

async fn history(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Vec<HistoryEntry>> {
    let m = st.manager.clone();
    Ok(Json(blocking(move || m.get_history(&id)).await?))
}

async fn action(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> ApiResult<SubmitResult> {
    let m = st.manager.clone();
    let sid = id.clone();
    let result = blocking(move || m.submit_action(&sid, &req.action)).await?;
    let tx = st.channel(&id);
    for t in &result.turns {
        // No subscribers is fine.
        let _ = tx.send(t.clone());
    }
    Ok(Json(result))
}

async fn feedback(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<FeedbackRequest>,
) -> ApiResult<StateView> {
    let m = st.manager.clone();
    Ok(Json(
        blocking(move || m.submit_feedback(&id, &req.answers)).await?,
    ))
}

async fn events(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let m = st.manager.clone();
    let sid = id.clone();
    blocking(move || m.get_state(&sid)).await?;
    let stream = BroadcastStream::new(st.channel(&id).subscribe()).filter_map(|msg| {
        let turn = msg.ok()?;
        Some(Ok(Event::default()
            .event("turn")
            .json_data(turn)
            .unwrap_or_else(|_| Event::default().event("error"))))
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/action", post(action))
        .route("/sessions/{id}/feedback", post(feedback))
        .route("/sessions/{id}/events", get(events))
        .with_state(state)
}
