//! JSON/HTTP service over one experiment. Long-running operations return a
//! job id to poll at `/api/jobs/{id}`.

mod api;
mod error;
mod openapi;
mod state;

use std::net::SocketAddr;

pub use api::{router, JobRef};
pub use error::{ApiError, ErrorBody};
pub use state::{AppState, JobStatus, JobView, Shared};

/// Serve on an already bound listener until the process exits.
pub async fn serve_on(listener: tokio::net::TcpListener, state: Shared) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub async fn serve(addr: SocketAddr, state: Shared) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, state).await
}
