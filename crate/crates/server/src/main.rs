use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use simcore::catalog::Catalog;
use simcore::procedural::load_rules;
use simcore::world::{SceneSnapshot, World};
use simserver::serve::Server;
use simserver::Dispatcher;

type Fallible<T = ()> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

/// Simulation server: length-prefixed JSON over TCP, or MCP over stdio.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[arg(long, env = "SIM_PORT", default_value_t = 9000)]
    port: u16,
    #[arg(long, env = "SIM_BIND", default_value = "127.0.0.1")]
    bind: String,
    /// Asset manifest (JSON Lines). Without it only the built-in shapes exist.
    #[arg(long, env = "SIM_CATALOG")]
    catalog: Option<PathBuf>,
    /// Procedural rule file loaded at startup.
    #[arg(long, env = "SIM_RULES")]
    rules: Option<PathBuf>,
    /// Snapshot restored at startup.
    #[arg(long, env = "SIM_SNAPSHOT")]
    snapshot: Option<PathBuf>,
    /// Start from a bundled scene: the furnished loft, or its empty room.
    #[arg(long, env = "SIM_FIXTURE", value_parser = ["loft", "loft-room"])]
    fixture: Option<String>,
    #[arg(long, env = "SIM_LOG_LEVEL", default_value = "info")]
    log_level: String,
    /// Speak MCP on stdin/stdout instead of listening on TCP.
    #[arg(long, env = "SIM_MCP")]
    mcp: bool,
}

fn build_world(cli: &Cli) -> Fallible<World> {
    let mut world = match (&cli.fixture, &cli.catalog) {
        (Some(f), _) if f == "loft-room" => simcore::fixtures::loft_room(),
        (Some(_), _) => simcore::fixtures::loft_world(),
        (None, Some(path)) => {
            let mut cat = Catalog::load(path)?;
            for rec in Catalog::builtin().iter() {
                if !cat.contains(&rec.asset_path) {
                    cat.insert((**rec).clone())?;
                }
            }
            World::new(Arc::new(cat))
        }
        (None, None) => World::new(Arc::new(Catalog::builtin())),
    };
    if let Some(p) = &cli.snapshot {
        let snap = SceneSnapshot::from_json(&std::fs::read_to_string(p)?)?;
        world.load_snapshot(&snap, true)?;
    }
    Ok(world)
}

fn main() -> Fallible {
    let cli = Cli::parse();
    // MCP owns stdout, so logs always go to stderr.
    env_logger::Builder::new().parse_filters(&cli.log_level).target(env_logger::Target::Stderr).init();
    let dispatcher = Arc::new(Dispatcher::new(build_world(&cli)?));
    if let Some(p) = &cli.rules {
        dispatcher.set_rules(load_rules(p)?);
    } else if cli.fixture.is_some() {
        dispatcher.set_rules(simcore::fixtures::loft_rules());
    }
    if cli.mcp {
        let stdin = std::io::stdin();
        simserver::mcp::serve_stdio(dispatcher, stdin.lock(), std::io::stdout().lock())?;
        return Ok(());
    }
    let server = Server::bind((cli.bind.as_str(), cli.port), dispatcher)
        .map_err(|e| format!("cannot bind {}:{}: {e}", cli.bind, cli.port))?;
    log::info!("listening on {}", server.local_addr());
    let handle = server.shutdown_handle();
    ctrlc::set_handler(move || {
        log::info!("shutting down");
        handle.shutdown();
    })?;
    server.run()?;
    Ok(())
}
