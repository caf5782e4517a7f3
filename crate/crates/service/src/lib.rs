//! Dataset build and browse service.

pub mod api;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

pub use api::router;
pub use store::{BuildStatus, DatasetRecord, Snapshot, Store, StoreError};

/// Serve `store` until the task is cancelled.
pub async fn serve(store: Arc<Store>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store)).await
}
