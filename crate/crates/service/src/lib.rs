//! HTTP front end for the renderer: scene loading, parameter control, single
//! frame rendering and a server-sent-event frame stream.

pub mod api;
pub mod error;
pub mod session;
pub mod stream;

use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::DefaultBodyLimit;
use axum::routing::get;
use axum::Router;
use tokio::sync::watch;

use crate::error::ApiError;
pub use crate::session::{Presets, Session};

/// Largest accepted request body (scene uploads).
pub const MAX_BODY_BYTES: usize = 1 << 30;

#[derive(Clone)]
pub struct AppState {
    session: Arc<Mutex<Session>>,
    presets: Arc<Presets>,
    /// Bumped after every change that alters the rendered image.
    updates: Arc<watch::Sender<u64>>,
}

impl AppState {
    pub fn new(session: Session, presets: Presets) -> Self {
        AppState {
            session: Arc::new(Mutex::new(session)),
            presets: Arc::new(presets),
            updates: Arc::new(watch::channel(0).0),
        }
    }

    pub fn presets(&self) -> &Presets {
        &self.presets
    }

    pub fn lock(&self) -> MutexGuard<'_, Session> {
        // a panicking render leaves the session itself consistent
        self.session.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn notify(&self) {
        self.updates.send_modify(|v| *v += 1);
    }

    pub fn subscribe(&self) -> watch::Receiver<u64> {
        self.updates.subscribe()
    }

    /// Runs `f` on the blocking pool with the session locked.
    pub async fn with_session<T, F>(&self, f: F) -> Result<T, ApiError>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session, &Presets) -> Result<T, ApiError> + Send + 'static,
    {
        let state = self.clone();
        tokio::task::spawn_blocking(move || f(&mut state.lock(), &state.presets))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?
    }
}

pub fn app(state: AppState) -> Router {
    Router::new()
        .route("/health", get(api::health))
        .route("/scene", get(api::get_scene).post(api::post_scene))
        .route("/params", get(api::get_params).post(api::post_params))
        .route("/camera", get(api::get_camera).post(api::post_camera))
        .route("/render", axum::routing::post(api::render))
        .route("/stream", get(stream::stream))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}
