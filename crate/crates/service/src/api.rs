use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use esmos_core::corpus::Manifest;
use esmos_core::ratings::{ParticipantInfo, RatingError};
use serde::Serialize;

use crate::store::{export_jsonl, RatingSubmission, Store};
use crate::ServiceError;

/// Environment variable holding the bearer token for `GET /api/export`.
pub const ADMIN_TOKEN_ENV: &str = "ESMOS_ADMIN_TOKEN";

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
    pub manifest: Arc<Manifest>,
    /// Directory that manifest `audio_path`s are relative to.
    pub audio_root: PathBuf,
    /// Export is refused while this is `None`.
    pub admin_token: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownSession(_) | ServiceError::UnknownStimulus(_) => StatusCode::NOT_FOUND,
            ServiceError::NotIssued(_) | ServiceError::Duplicate(_) | ServiceError::Exhausted(_) => {
                StatusCode::CONFLICT
            }
            ServiceError::Invalid(_)
            | ServiceError::Rating(RatingError::ScoreOutOfRange(_) | RatingError::InvalidParticipant(_)) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            tracing::error!(error = %self, "request failed");
        }
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

#[derive(Serialize)]
struct SessionCreated {
    session_id: String,
}

#[derive(Serialize)]
struct StimulusRef {
    stimulus_id: String,
    audio_url: String,
    duration_s: f64,
}

#[derive(Serialize)]
struct BatchResponse {
    batch_index: u32,
    stimuli: Vec<StimulusRef>,
}

async fn create_session(
    State(state): State<AppState>,
    Json(info): Json<ParticipantInfo>,
) -> Result<(StatusCode, Json<SessionCreated>), ServiceError> {
    let session_id = state.store.create_session(info)?;
    tracing::info!(%session_id, "session created");
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id })))
}

async fn next_batch(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<BatchResponse>, ServiceError> {
    let batch = state.store.next_batch(&id)?;
    let stimuli = batch
        .stimuli
        .into_iter()
        .map(|sid| {
            let duration_s = state.manifest.get(&sid).map_or(0.0, |s| s.duration_s);
            StimulusRef { audio_url: format!("/api/stimuli/{sid}/audio"), stimulus_id: sid, duration_s }
        })
        .collect();
    Ok(Json(BatchResponse { batch_index: batch.batch_index, stimuli }))
}

async fn submit_rating(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(sub): Json<RatingSubmission>,
) -> Result<impl IntoResponse, ServiceError> {
    let rating = state.store.submit_rating(&id, sub)?;
    Ok((StatusCode::CREATED, Json(rating)))
}

async fn audio(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let stimulus = state.manifest.get(&id).ok_or_else(|| ServiceError::UnknownStimulus(id.clone()))?;
    let path = state.audio_root.join(&stimulus.audio_path);
    let bytes = tokio::fs::read(&path).await.map_err(|source| ServiceError::Io { path, source })?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}

fn token_matches(given: &[u8], want: &[u8]) -> bool {
    given.len() == want.len() && given.iter().zip(want).fold(0u8, |acc, (a, b)| acc | (a ^ b)) == 0
}

async fn export(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let Some(want) = state.admin_token.as_deref() else {
        return (StatusCode::FORBIDDEN, "export disabled: no admin token configured").into_response();
    };
    let given = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .unwrap_or("");
    if !token_matches(given.as_bytes(), want.as_bytes()) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    let body = export_jsonl(&state.store.export());
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/batch", get(next_batch))
        .route("/api/sessions/{id}/ratings", post(submit_rating))
        .route("/api/stimuli/{id}/audio", get(audio))
        .route("/api/export", get(export))
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "rating service listening");
    axum::serve(listener, router(state)).await
}
