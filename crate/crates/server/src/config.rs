use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use pomoshare_core::reports::DayBoundary;
use pomoshare_core::TimerConfig;

/// Shared pomodoro server. Flags override the matching environment variables.
#[derive(Clone, Debug, Parser)]
#[command(name = "pomoshare-server", version)]
pub struct Args {
    /// Address for newline-delimited JSON clients.
    #[arg(long, env = "POMOSHARE_LISTEN", default_value = "127.0.0.1:7420")]
    pub listen: SocketAddr,
    /// Address for the HTTP status endpoint and the WebSocket stream.
    #[arg(long, env = "POMOSHARE_HTTP", default_value = "127.0.0.1:7421")]
    pub http: SocketAddr,
    #[arg(long, env = "POMOSHARE_DATA_DIR", default_value = "pomoshare-data")]
    pub data_dir: PathBuf,
    /// Minutes east of UTC where the working day starts; defaults to the server's zone.
    #[arg(long, env = "POMOSHARE_UTC_OFFSET", allow_hyphen_values = true)]
    pub utc_offset_minutes: Option<i32>,
    #[arg(long, env = "POMOSHARE_WORK_MINUTES", default_value_t = 25)]
    pub work_minutes: u32,
    #[arg(long, env = "POMOSHARE_SHORT_BREAK_MINUTES", default_value_t = 5)]
    pub short_break_minutes: u32,
    #[arg(long, env = "POMOSHARE_LONG_BREAK_MINUTES", default_value_t = 15)]
    pub long_break_minutes: u32,
    #[arg(long, env = "POMOSHARE_LONG_BREAK_EVERY", default_value_t = 4)]
    pub long_break_every: u32,
    /// Messages buffered per client before a slow client is dropped.
    #[arg(long, env = "POMOSHARE_CLIENT_QUEUE", default_value_t = 256)]
    pub client_queue: usize,
}

/// Everything a running server needs besides its sockets.
#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub day: DayBoundary,
    pub defaults: TimerConfig,
    pub client_queue: usize,
    /// Command ids remembered per session for retry detection.
    pub dedupe_window: usize,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            data_dir: data_dir.into(),
            day: DayBoundary::local(),
            defaults: TimerConfig::default(),
            client_queue: 256,
            dedupe_window: 4096,
        }
    }
}

impl From<&Args> for ServerConfig {
    fn from(a: &Args) -> Self {
        ServerConfig {
            data_dir: a.data_dir.clone(),
            day: a.utc_offset_minutes.map_or_else(DayBoundary::local, |m| DayBoundary { utc_offset_minutes: m }),
            defaults: TimerConfig {
                work_minutes: a.work_minutes,
                short_break_minutes: a.short_break_minutes,
                long_break_minutes: a.long_break_minutes,
                long_break_every: a.long_break_every,
            },
            client_queue: a.client_queue.max(1),
            dedupe_window: 4096,
        }
    }
}
