use std::path::PathBuf;

use anyhow::Result;
use clap::Parser;

use einstein_core::engine::ActionSpaceConfig;
use einstein_core::session::{AgentSettings, GameList, SessionManager};
use einstein_core::verifier::VerifierStack;
use einstein_server::{router, AppState};

#[derive(Parser)]
#[command(
    name = "einstein-server",
    about = "Hosts human-vs-agent puzzle sessions"
)]
struct Args {
    /// Directory holding the session index and logs.
    #[arg(long, default_value = "sessions-data")]
    root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: String,
    /// Action space of the agent partner.
    #[arg(long, default_value = "both")]
    agent_config: ActionSpaceConfig,
    #[arg(long, default_value = "reasoning")]
    verifier: VerifierStack,
    /// Seed of the standard game list.
    #[arg(long, default_value_t = 1000)]
    seed: u64,
}

#[tokio::main]
async fn main() -> Result<()> {
    let args = Args::parse();
    let agent = AgentSettings {
        config: args.agent_config,
        stack: args.verifier,
        ..AgentSettings::default()
    };
    let lists = vec![GameList::standard("standard", args.seed)];
    let manager = SessionManager::open(&args.root, lists, agent)?;
    let app = router(AppState::new(manager));
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
