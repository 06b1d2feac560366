//! HTTP workbench: datasets, a deduplicating job queue over an on-disk
//! artifact cache, analysis results as JSON, and t-SNE snapshots streamed as
//! server-sent events.

pub mod api;
pub mod cache;
pub mod datasets;
pub mod error;
pub mod jobs;
pub mod pipeline;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use cache::ArtifactCache;
pub use datasets::DatasetRegistry;
pub use error::ApiError;
pub use jobs::{JobKind, JobManager, JobRecord, JobStatus};

pub const DEFAULT_PORT: u16 = 8789;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub port: u16,
    pub workers: usize,
}

/// Logical cores minus one, at least one.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .saturating_sub(1)
        .max(1)
}

impl ServiceConfig {
    /// Reads `WORKBENCH_DATA_DIR`, `WORKBENCH_PORT` and `WORKBENCH_WORKERS`.
    pub fn from_env() -> Result<Self, String> {
        let data_dir = std::env::var_os("WORKBENCH_DATA_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        let port = match std::env::var("WORKBENCH_PORT") {
            Ok(s) => s.parse().map_err(|_| format!("WORKBENCH_PORT: invalid port `{s}`"))?,
            Err(_) => DEFAULT_PORT,
        };
        let workers = match std::env::var("WORKBENCH_WORKERS") {
            Ok(s) => match s.parse::<usize>() {
                Ok(n) if n > 0 => n,
                _ => return Err(format!("WORKBENCH_WORKERS: expected a positive integer, got `{s}`")),
            },
            Err(_) => default_workers(),
        };
        Ok(ServiceConfig {
            data_dir,
            port,
            workers,
        })
    }
}

pub struct AppState {
    pub config: ServiceConfig,
    pub registry: DatasetRegistry,
    pub cache: Arc<ArtifactCache>,
    pub jobs: JobManager,
}

impl AppState {
    /// Datasets live under `<data_dir>/datasets`, artifacts under `<data_dir>/cache`.
    pub fn open(config: ServiceConfig) -> std::io::Result<Arc<Self>> {
        let registry = DatasetRegistry::open(&config.data_dir)?;
        let cache = Arc::new(ArtifactCache::open(config.data_dir.join("cache"))?);
        let jobs = JobManager::new(cache.clone(), config.workers);
        Ok(Arc::new(AppState {
            config,
            registry,
            cache,
            jobs,
        }))
    }
}

/// Binds `0.0.0.0:<port>` (port 0 picks a free one).
pub async fn bind(port: u16) -> std::io::Result<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
