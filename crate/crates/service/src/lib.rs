//! HTTP facade over [`vdcook_core::Engine`].
//!
//! All bodies are canonical JSON (sorted keys, no insignificant
//! whitespace). Engine calls block, so handlers run them on the blocking
//! pool; cook jobs go through [`jobs::JobManager`].

pub mod error;
pub mod jobs;
mod routes;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;
use vdcook_core::model::canonical;
use vdcook_core::Engine;

pub use error::ApiError;
pub use jobs::{JobManager, JobPhase, JobState, DEFAULT_WORKERS};
pub use routes::router;

/// A response body serialized as canonical JSON.
pub struct CanonicalJson<T>(pub StatusCode, pub T);

impl<T: Serialize> IntoResponse for CanonicalJson<T> {
    fn into_response(self) -> Response {
        (self.0, [(header::CONTENT_TYPE, "application/json")], canonical::to_string(&self.1)).into_response()
    }
}

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub jobs: Arc<JobManager>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, workers: usize) -> std::io::Result<AppState> {
        let jobs = Arc::new(JobManager::open(engine.clone(), workers)?);
        Ok(AppState { engine, jobs })
    }
}

/// Binds `listen` and serves until ctrl-c. Reports the bound address
/// through `on_bound` before accepting connections.
pub async fn serve(state: AppState, listen: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    tracing::info!(%addr, "listening");
    on_bound(addr);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
