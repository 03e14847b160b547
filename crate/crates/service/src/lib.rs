//! HTTP session service: a live labeling loop per session.
//!
//! | route | effect |
//! |---|---|
//! | `POST /sessions` | create a session, returns its state |
//! | `GET /sessions/{id}` | session state |
//! | `GET /sessions/{id}/batch` | pending candidates with facts, decisions and scores |
//! | `POST /sessions/{id}/corrections` | resolve the pending batch |
//! | `POST /sessions/{id}/rules` | replace one rule with edited DSL text |
//! | `POST /sessions/{id}/step` | relearn and select the next batch |
//! | `GET /sessions/{id}/metrics` | per-iteration metrics |

mod error;
mod model;
mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::net::{TcpListener, ToSocketAddrs};
use tokio::task::JoinHandle;

pub use error::{ApiError, ErrorBody};
pub use model::{
    BatchView, Candidate, ConstraintView, Corrections, CreateSession, DatasetRef, Event,
    LabeledView, RuleEditRequest, RuleView, SessionState,
};
pub use store::{read_log, Outcome, ReplayFailure, SessionStore, Snapshot};

type Store = State<Arc<SessionStore>>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(t)| t).map_err(|e| {
        let status = if e.status().is_client_error() {
            e.status()
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, "invalid_body", e.body_text())
    })
}

async fn create(
    State(store): Store,
    payload: Result<Json<CreateSession>, JsonRejection>,
) -> Result<Response, ApiError> {
    let request = body(payload)?;
    let snapshot = tokio::task::spawn_blocking(move || store.create(request))
        .await
        .map_err(|e| ApiError::internal("worker_failed", e.to_string()))??;
    Ok((StatusCode::CREATED, Json(&snapshot.state)).into_response())
}

async fn state(
    State(store): Store,
    Path(id): Path<String>,
) -> Result<Json<SessionState>, ApiError> {
    Ok(Json(store.snapshot(&id)?.state.clone()))
}

async fn batch(State(store): Store, Path(id): Path<String>) -> Result<Json<BatchView>, ApiError> {
    let snapshot = store.snapshot(&id)?;
    match &snapshot.batch {
        Some(b) => Ok(Json(b.clone())),
        None => Err(
            ApiError::not_found("no_pending_batch", "no batch is pending")
                .with_detail(json!({ "finished": snapshot.state.finished })),
        ),
    }
}

#[derive(Serialize)]
struct MetricsView<'a> {
    id: &'a str,
    metrics: &'a [rapid_core::labeling::IterationMetrics],
}

async fn metrics(State(store): Store, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snapshot = store.snapshot(&id)?;
    let view = MetricsView {
        id: &snapshot.state.id,
        metrics: &snapshot.state.metrics,
    };
    Ok(Json(view).into_response())
}

async fn corrections(
    State(store): Store,
    Path(id): Path<String>,
    payload: Result<Json<Corrections>, JsonRejection>,
) -> Result<Json<SessionState>, ApiError> {
    let Corrections { corrections } = body(payload)?;
    let (snapshot, _) = store
        .mutate(&id, Event::Corrections { corrections })
        .await?;
    Ok(Json(snapshot.state.clone()))
}

#[derive(Serialize)]
struct RuleEditView<'a> {
    added: Vec<String>,
    removed: Vec<String>,
    state: &'a SessionState,
}

async fn rules(
    State(store): Store,
    Path(id): Path<String>,
    payload: Result<Json<RuleEditRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let RuleEditRequest { label, dsl } = body(payload)?;
    let (snapshot, outcome) = store.mutate(&id, Event::Rule { label, dsl }).await?;
    let diff = outcome.diff.unwrap_or_default();
    let view = RuleEditView {
        added: diff.added.iter().map(ToString::to_string).collect(),
        removed: diff.removed.iter().map(ToString::to_string).collect(),
        state: &snapshot.state,
    };
    Ok(Json(view).into_response())
}

async fn step(State(store): Store, Path(id): Path<String>) -> Result<Json<SessionState>, ApiError> {
    let (snapshot, _) = store.mutate(&id, Event::Step).await?;
    Ok(Json(snapshot.state.clone()))
}

async fn not_found() -> ApiError {
    ApiError::not_found("no_route", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(
        StatusCode::METHOD_NOT_ALLOWED,
        "method_not_allowed",
        "method not allowed on this route",
    )
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}", get(state))
        .route("/sessions/{id}/batch", get(batch))
        .route("/sessions/{id}/corrections", post(corrections))
        .route("/sessions/{id}/rules", post(rules))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/metrics", get(metrics))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .with_state(store)
}

/// Binds `addr` and serves in a background task.
pub async fn spawn(
    store: Arc<SessionStore>,
    addr: impl ToSocketAddrs,
) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move { axum::serve(listener, router(store)).await });
    Ok((local, handle))
}

/// Serves until the process is stopped.
pub async fn serve(store: Arc<SessionStore>, addr: impl ToSocketAddrs) -> std::io::Result<()> {
    let listener = TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(store)).await
}
