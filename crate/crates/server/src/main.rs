use std::path::PathBuf;

use clap::Parser;
use tracing_subscriber::EnvFilter;
use votelab_server::{AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "votelab-server", version, about = "Serve the votelab HTTP API")]
struct Args {
    /// TOML config file; `VOTELAB_*` environment variables override it.
    #[arg(long, env = "VOTELAB_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("VOTELAB_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    if let Err(e) = run(Args::parse()).await {
        eprintln!("votelab-server: {e}");
        std::process::exit(1);
    }
}

async fn run(args: Args) -> Result<(), votelab_server::StartError> {
    let mut config = match &args.config {
        Some(path) => ServerConfig::load(path)?,
        None => ServerConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    if config.server.admin_token.is_none() {
        tracing::warn!("no admin token configured; /v1/admin routes will refuse every caller");
    }
    let bind = config.server.bind;
    let state = AppState::from_config(config)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, store = %state.platform.describe_store(), "listening");
    votelab_server::serve(state, listener, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
