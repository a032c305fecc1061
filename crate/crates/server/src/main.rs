use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use pomoshare_server::{start, Args, ServerConfig, SystemClock};
use tracing_subscriber::EnvFilter;

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let config = ServerConfig::from(&args);
    if let Err(e) = config.defaults.validate() {
        eprintln!("pomoshare-server: invalid session defaults: {e}");
        return ExitCode::from(2);
    }
    let running = match start(config, Arc::new(SystemClock), args.listen, args.http).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("pomoshare-server: {e}");
            return ExitCode::from(1);
        }
    };
    tracing::info!(tcp = %running.tcp_addr, http = %running.http_addr, data = %args.data_dir.display(), "listening");
    let _ = tokio::signal::ctrl_c().await;
    tracing::info!("shutting down");
    running.shutdown();
    ExitCode::SUCCESS
}
