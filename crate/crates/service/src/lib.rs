//! HTTP facade over the embedding pipeline: content-addressed datasets,
//! asynchronous embedding jobs, and classification of finished embeddings.
//!
//! | method | path | body | result |
//! |---|---|---|---|
//! | POST | `/datasets` | [`api::DatasetUpload`] JSON, or CSV | [`api::DatasetInfo`] |
//! | GET | `/datasets/{id}` | | [`api::DatasetInfo`] |
//! | POST | `/embed` | [`api::EmbedRequest`] | [`api::JobRecord`], 202 until done |
//! | GET | `/jobs/{id}` | | [`api::JobRecord`] |
//! | GET | `/embeddings/{id}` | | `seigmap::embedding::EmbeddingFile` |
//! | POST | `/classify` | [`api::ClassifyRequest`] | [`api::ClassifyResponse`] |
//! | GET | `/health` | | [`api::Health`] |
//!
//! Errors come back as `{"error": "..."}` with status 400 (unparseable),
//! 404 (unknown id), 409 (job not done), 413 (too many points or bytes) or
//! 422 (parameters fail validation).

pub mod api;
mod handlers;
mod jobs;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::http::{HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use handlers::ApiError;
pub use jobs::AppState;

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub port: u16,
    pub data_dir: PathBuf,
    /// Largest accepted dataset, in points.
    pub point_cap: usize,
    /// Embedding jobs run at most this many at a time.
    pub workers: usize,
    pub body_limit: usize,
    /// Allowed CORS origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            data_dir: PathBuf::from("seigmap-data"),
            point_cap: 100_000,
            workers: 2,
            body_limit: 256 << 20,
            cors_origin: None,
        }
    }
}

fn parse<T: std::str::FromStr>(name: &str, v: String) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| format!("{name}={v}: {e}"))
}

impl ServiceConfig {
    /// Defaults overridden by `SEIGMAP_PORT`, `SEIGMAP_DATA_DIR`,
    /// `SEIGMAP_POINT_CAP`, `SEIGMAP_WORKERS` and `SEIGMAP_CORS_ORIGIN`.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Self::default();
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        if let Some(v) = var("SEIGMAP_PORT") {
            c.port = parse("SEIGMAP_PORT", v)?;
        }
        if let Some(v) = var("SEIGMAP_DATA_DIR") {
            c.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("SEIGMAP_POINT_CAP") {
            c.point_cap = parse("SEIGMAP_POINT_CAP", v)?;
        }
        if let Some(v) = var("SEIGMAP_WORKERS") {
            c.workers = parse("SEIGMAP_WORKERS", v)?;
        }
        c.cors_origin = var("SEIGMAP_CORS_ORIGIN");
        Ok(c)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match &state.config.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::list([]),
        },
        None => AllowOrigin::from(Any),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers(Any);
    let limit = state.config.body_limit;
    Router::new()
        .route("/health", get(handlers::health))
        .route("/datasets", post(handlers::post_dataset))
        .route("/datasets/{id}", get(handlers::get_dataset))
        .route("/embed", post(handlers::post_embed))
        .route("/jobs/{id}", get(handlers::get_job))
        .route("/embeddings/{id}", get(handlers::get_embedding))
        .route("/classify", post(handlers::post_classify))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

/// Binds `0.0.0.0:port` and serves until the process ends.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
