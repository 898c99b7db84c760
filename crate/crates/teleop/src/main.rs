use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use tokio::net::TcpListener;

use omniwheel::control::{load_gains, GainSet};
use omniwheel::model::load_params;
use omniwheel::simulation::SensorProfile;
use omniwheel::RobotParams;
use omniwheel_teleop::session::DEFAULT_STREAM_RATE;
use omniwheel_teleop::{serve, Session, SessionConfig};

/// Serve a live simulation over WebSocket for remote steering.
#[derive(Parser)]
#[command(name = "omniwheel-teleop", version)]
struct Cli {
    #[arg(long, default_value = "127.0.0.1:8765")]
    bind: String,
    /// Robot parameter file (TOML); defaults to the built-in table.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Gain file (TOML); defaults to LQR with the standard weights.
    #[arg(long)]
    gains: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "realistic")]
    sensor: SensorProfile,
    /// Telemetry frames per second.
    #[arg(long, default_value_t = DEFAULT_STREAM_RATE)]
    stream_rate: f64,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn session(cli: &Cli) -> Result<Session> {
    let params = match &cli.params {
        Some(path) => load_params(&read(path)?).with_context(|| format!("in {}", path.display()))?,
        None => RobotParams::prototype(),
    };
    let gains = match &cli.gains {
        Some(path) => load_gains(&read(path)?).with_context(|| format!("in {}", path.display()))?,
        None => GainSet::synthesize_default(&params).context("default gain synthesis")?,
    };
    let cfg = SessionConfig {
        sensor: cli.sensor,
        seed: cli.seed,
        stream_rate: cli.stream_rate,
        ..SessionConfig::new(params, gains)
    };
    Ok(Session::new(cfg)?)
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    let session = session(&cli)?;
    let listener = TcpListener::bind(&cli.bind).await.with_context(|| format!("binding {}", cli.bind))?;
    eprintln!("listening on ws://{}", listener.local_addr()?);
    serve(listener, session, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
