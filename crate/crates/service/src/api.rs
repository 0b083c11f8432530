use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use crate::store::{NewRating, NewSession, RatingStore, StoreError};

impl IntoResponse for StoreError {
    fn into_response(self) -> Response {
        let status = match &self {
            StoreError::UnknownSession(_) | StoreError::UnknownPair(_) => StatusCode::NOT_FOUND,
            StoreError::AmbiguousPair(_) => StatusCode::CONFLICT,
            StoreError::EmptySession
            | StoreError::DuplicatePair(_)
            | StoreError::UnreadablePair { .. }
            | StoreError::InvalidThresholds
            | StoreError::OutOfRange(_)
            | StoreError::EmptyExpert
            | StoreError::NoRatedPairs(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

#[derive(Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

#[derive(Serialize)]
struct Created {
    record_id: u64,
    session_id: String,
    pair_id: String,
}

type Shared = State<Arc<RatingStore>>;

async fn list_sessions(State(store): Shared) -> impl IntoResponse {
    Json(store.sessions())
}

async fn create_session(State(store): Shared, Json(req): Json<NewSession>) -> Result<Response, StoreError> {
    let session = store.create_session(req)?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_session(State(store): Shared, Path(id): Path<String>) -> Result<Response, StoreError> {
    Ok(Json(store.session(&id)?).into_response())
}

async fn pair_data(
    State(store): Shared,
    Path(id): Path<String>,
    Query(q): Query<SessionQuery>,
) -> Result<Response, StoreError> {
    Ok(Json(store.pair_data(&id, q.session.as_deref())?).into_response())
}

async fn post_rating(
    State(store): Shared,
    Path(id): Path<String>,
    Json(req): Json<NewRating>,
) -> Result<Response, StoreError> {
    let r = store.record_rating(&id, req)?;
    let body = Created {
        record_id: r.record_id,
        session_id: r.session_id,
        pair_id: r.pair_id,
    };
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn export(State(store): Shared, Path(id): Path<String>) -> Result<Response, StoreError> {
    let csv = store.export_csv(&id)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

pub fn router(store: Arc<RatingStore>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/sessions", get(list_sessions).post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/export", get(export))
        .route("/api/pairs/{id}/data", get(pair_data))
        .route("/api/pairs/{id}/ratings", post(post_rating))
        .with_state(store);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serve until ctrl-c.
pub async fn serve(store: Arc<RatingStore>, addr: SocketAddr, ui_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
