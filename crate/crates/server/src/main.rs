use clap::Parser;
use tokio::net::TcpListener;
use tracing_subscriber::EnvFilter;

use vesseltrack_server::{serve, ServerOptions};

/// Vessel tracking HTTP service.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Default worker threads per sequence (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let listener = TcpListener::bind(&args.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let options = ServerOptions {
        default_threads: args.threads,
    };
    serve(listener, options, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
