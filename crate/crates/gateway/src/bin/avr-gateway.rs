use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use avr_core::embedding::{Embedder, StubEmbedder};
use avr_gateway::backend::HttpBackend;
use avr_gateway::config::{EmbedderKind, GatewayConfig};
use avr_gateway::embedder::RemoteEmbedder;
use avr_gateway::{server, Gateway};
use clap::Parser;

/// Routes GUI grounding calls across a pool of vision-language models.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Gateway configuration file (TOML).
    #[arg(long, env = "AVR_CONFIG")]
    config: PathBuf,
    /// Overrides the configured listen address.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
    /// Overrides the configured log filter.
    #[arg(long)]
    log_level: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let mut cfg = GatewayConfig::load(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    cfg.apply_env(std::env::vars())?;
    if let Some(listen) = args.listen {
        cfg.listen = listen;
    }
    if let Some(level) = args.log_level {
        cfg.log_level = level;
    }
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cfg.log_level)?)
        .init();

    let embedder: Arc<dyn Embedder> = match cfg.embedder.kind {
        EmbedderKind::Stub => Arc::new(StubEmbedder::new()),
        EmbedderKind::Remote => Arc::new(RemoteEmbedder::new(
            &cfg.embedder.url,
            Duration::from_millis(cfg.embedder.timeout_ms),
        )?),
    };
    let backend = Arc::new(HttpBackend::new(cfg.backend_timeout())?);
    let gateway = Arc::new(Gateway::from_config(&cfg, embedder, backend)?);
    server::serve(gateway, cfg.listen, cfg.max_concurrent).await?;
    Ok(())
}
