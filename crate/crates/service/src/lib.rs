//! HTTP API over a sequence store: frame and curve browsing, prompt-driven
//! segmentation, annotation capture, evaluation and background simulation.
//!
//! Endpoints are listed in `API.md` next to this crate's manifest.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use thermoseg_core::dataset::{SamplingConfig, SequenceStore};
use tokio::sync::Mutex;

pub mod dto;
mod error;
mod handlers;
mod render;

pub use error::{ApiError, ApiResult};
pub use handlers::Jobs;
pub use render::{render_png, Colormap};

/// Shared state of one service instance.
pub struct AppState {
    pub store: SequenceStore,
    /// Warm-up and cool-off used for corrected frames and curves.
    pub sampling: SamplingConfig,
    pub jobs: Jobs,
    /// Serializes annotation writes per sequence.
    annotation_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl AppState {
    pub fn new(store: SequenceStore, sampling: SamplingConfig) -> Self {
        Self {
            store,
            sampling,
            jobs: Jobs::default(),
            annotation_locks: Mutex::default(),
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sequences", get(handlers::list_sequences))
        .route("/sequences/{id}/frames/{k}", get(handlers::get_frame))
        .route("/sequences/{id}/curve", get(handlers::get_curve))
        .route("/sequences/{id}/segment", post(handlers::post_segment))
        .route("/annotations", post(handlers::post_annotation))
        .route("/eval", post(handlers::post_eval))
        .route("/simulate", post(handlers::post_simulate))
        .route("/jobs/{id}", get(handlers::get_job))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
