use std::net::SocketAddr;
use std::time::Duration;

use clap::Parser;
use ltlbt_service::{router, spawn_evictor, AppState};

#[derive(Parser)]
#[command(name = "ltlbt-service", version, about = "Serve live ltlbt sessions over HTTP")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Drop sessions nobody has touched for this long.
    #[arg(long = "idle-ttl-s", default_value_t = 3600)]
    idle_ttl_s: u64,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let state = AppState::new(Duration::from_secs(args.idle_ttl_s));
    spawn_evictor(state.clone(), Duration::from_secs(60));
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
