//! Project persistence, background jobs and the JSON-over-HTTP API for term
//! set expansion.

pub mod api;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod project;
pub mod render;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use config::ServiceConfig;
pub use error::{Result, ServiceError};
pub use pipeline::TrainRequest;
pub use project::Project;
pub use store::Store;

/// Serves the API until interrupted.
pub async fn serve(config: &ServiceConfig) -> Result<()> {
    let store = Arc::new(Store::new(&config.data_root, config.train.clone())?);
    let app = api::router(store, config.max_body_bytes);
    let addr: SocketAddr = format!("{}:{}", config.host, config.port)
        .parse()
        .map_err(|_| ServiceError::bad_request(format!("invalid listen address {}:{}", config.host, config.port)))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
