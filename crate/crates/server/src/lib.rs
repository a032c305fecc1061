//! Shared pomodoro session server.
//!
//! One task per session owns the session state and applies commands in
//! arrival order. Clients connect over newline-delimited JSON on TCP, or over
//! WebSocket with the same messages; `/status/<session>` returns the latest
//! presence board as a JSON document.

pub mod clock;
pub mod config;
pub mod hub;
pub mod net;
pub mod store;

use std::net::SocketAddr;
use std::sync::Arc;

use tokio::net::TcpListener;
use tokio::task::JoinHandle;

pub use clock::{ManualClock, SystemClock, TimeSource};
pub use config::{Args, ServerConfig};
pub use hub::Hub;

/// A server running in the background of the current runtime.
pub struct Running {
    pub hub: Arc<Hub>,
    pub tcp_addr: SocketAddr,
    pub http_addr: SocketAddr,
    tasks: Vec<JoinHandle<std::io::Result<()>>>,
}

impl Running {
    pub fn shutdown(self) {
        for t in self.tasks {
            t.abort();
        }
    }
}

pub async fn start(
    config: ServerConfig,
    time: Arc<dyn TimeSource>,
    tcp: SocketAddr,
    http: SocketAddr,
) -> std::io::Result<Running> {
    std::fs::create_dir_all(&config.data_dir)?;
    let hub = Hub::new(config, time);
    let tcp = TcpListener::bind(tcp).await?;
    let http = TcpListener::bind(http).await?;
    let (tcp_addr, http_addr) = (tcp.local_addr()?, http.local_addr()?);
    let tasks = vec![tokio::spawn(net::serve_tcp(hub.clone(), tcp)), tokio::spawn(net::serve_http(hub.clone(), http))];
    Ok(Running { hub, tcp_addr, http_addr, tasks })
}
