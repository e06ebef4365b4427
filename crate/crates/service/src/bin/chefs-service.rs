use std::path::PathBuf;
use std::process::ExitCode;

use chefs_service::server::router;
use chefs_service::ServiceConfig;
use clap::Parser;

#[derive(Parser)]
#[command(name = "chefs-service", version, about = "Chef's Hat game server")]
struct Cli {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured listen address.
    #[arg(long)]
    listen: Option<String>,
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match &cli.config {
        Some(path) => ServiceConfig::load(path),
        None => Ok(ServiceConfig::default()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("chefs-service: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(listen) = cli.listen {
        config.listen = listen;
    }
    let listener = match tokio::net::TcpListener::bind(&config.listen).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("chefs-service: cannot listen on {}: {e}", config.listen);
            return ExitCode::FAILURE;
        }
    };
    eprintln!("listening on ws://{}/ws", config.listen);
    if let Err(e) = axum::serve(listener, router(config)).await {
        eprintln!("chefs-service: {e}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
