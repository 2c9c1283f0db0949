use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use splatclimate::scene::load_scene;
use splatclimate_service::{app, AppState, Presets, Session};

/// Serve scene rendering, climate parameters and frame streams over HTTP.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Scene loaded at startup.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Directory of JSON color transforms offered as style presets.
    #[arg(long)]
    styles: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();

    let presets = match &args.styles {
        Some(dir) => Presets::load_dir(dir)?,
        None => Presets::default(),
    };
    let mut session = Session::new();
    if let Some(path) = &args.scene {
        let summary = session.load_scene(load_scene(path)?);
        log::info!("loaded {} ({} gaussians)", path.display(), summary.count);
    }

    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app(AppState::new(session, presets))).await?;
    Ok(())
}
