//! The JSON-over-HTTP wire protocol.

use std::future::Future;
use std::io;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use contain_core::wire::{ExposureQuery, InfectedUpload};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::service::{RequestKind, Service};
use crate::state::SubmitOutcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UploadResponse {
    Accepted { version: u64 },
    Rejected { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorityResponse {
    pub authority_public_key: String,
}

#[derive(Debug, Deserialize)]
struct SinceParam {
    #[serde(default)]
    since: u64,
}

fn rejected(reason: &str) -> Response {
    (StatusCode::BAD_REQUEST, Json(UploadResponse::Rejected { reason: reason.into() })).into_response()
}

async fn post_infected(State(svc): State<Arc<Service>>, body: Bytes) -> Response {
    svc.record(RequestKind::Upload);
    let upload: InfectedUpload = match serde_json::from_slice(&body) {
        Ok(u) => u,
        Err(e) => {
            tracing::info!(error = %e, "malformed upload");
            return rejected("malformed");
        }
    };
    let svc2 = Arc::clone(&svc);
    let outcome = match tokio::task::spawn_blocking(move || svc2.submit(upload)).await {
        Ok(r) => r,
        Err(e) => Err(io::Error::other(e)),
    };
    match outcome {
        Ok(SubmitOutcome::Accepted { version }) => {
            tracing::info!(version, "upload accepted");
            Json(UploadResponse::Accepted { version }).into_response()
        }
        Ok(SubmitOutcome::Rejected(reason)) => {
            tracing::info!(%reason, "upload rejected");
            rejected(reason.as_str())
        }
        Err(e) => {
            tracing::error!(error = %e, "could not write upload log");
            (StatusCode::INTERNAL_SERVER_ERROR, Json(serde_json::json!({ "status": "error" }))).into_response()
        }
    }
}

async fn get_published(State(svc): State<Arc<Service>>, Query(q): Query<SinceParam>) -> Response {
    svc.record(RequestKind::Published);
    Json(svc.published(q.since)).into_response()
}

async fn post_check(State(svc): State<Arc<Service>>, body: Bytes) -> Response {
    svc.record(RequestKind::Check);
    match serde_json::from_slice::<ExposureQuery>(&body) {
        Ok(q) => Json(svc.check(&q)).into_response(),
        Err(_) => (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": "malformed query" }))).into_response(),
    }
}

async fn get_authority(State(svc): State<Arc<Service>>) -> Response {
    svc.record(RequestKind::Authority);
    let key = STANDARD.encode(svc.authority().to_bytes());
    Json(AuthorityResponse { authority_public_key: key }).into_response()
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/v1/infected", post(post_infected))
        .route("/v1/published", get(get_published))
        .route("/v1/check", post(post_check))
        .route("/v1/authority", get(get_authority))
        .with_state(service)
}

/// Serves until the process is stopped. The publication mode is frozen as
/// soon as this is called.
pub fn serve(listener: TcpListener, service: Arc<Service>) -> impl Future<Output = io::Result<()>> {
    serve_with_shutdown(listener, service, std::future::pending())
}

/// Like [`serve`], returning once `shutdown` resolves and open requests finish.
pub fn serve_with_shutdown<F>(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: F,
) -> impl Future<Output = io::Result<()>>
where
    F: Future<Output = ()> + Send + 'static,
{
    service.start_serving();
    async move { axum::serve(listener, router(service)).with_graceful_shutdown(shutdown).await }
}
