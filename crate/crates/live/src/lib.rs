//! Live coaching sessions: human trainers connect over WebSocket, answer
//! good-or-bad questions about the agent's moves, and the session turns
//! their answers into rewards with the trust-weighted ensemble.
//!
//! [`engine::SessionEngine`] is the synchronous learning loop;
//! [`session`] wraps it in one actor task per session; [`server`] exposes
//! the HTTP and WebSocket endpoints. Message schemas live in [`protocol`].

pub mod engine;
pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use engine::{EngineConfig, SessionEngine};
pub use error::{LiveError, Result};
pub use server::router;
pub use session::{Registry, SessionHandle, SessionSettings};

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(Registry::new(data_dir)))).await
}
