//! The USS server.

use std::net::IpAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Parser;
use tbrd_core::uss::{Registry, UssServer};

#[derive(Parser)]
#[command(name = "tbrd-uss", about = "Serve mission registrations and observer queries")]
struct Cli {
    #[arg(long, default_value = "0.0.0.0")]
    ip: IpAddr,
    #[arg(long, default_value_t = 5555)]
    port: u16,
    /// Registry snapshot, loaded at startup and rewritten after each change.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(short, long)]
    verbose: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    tbrd_cli::init_logging(cli.verbose);
    let registry = match &cli.snapshot {
        Some(p) => Registry::open(p).with_context(|| format!("opening snapshot {}", p.display()))?,
        None => Registry::new(),
    };
    let server = UssServer::bind((cli.ip, cli.port), Arc::new(registry))
        .with_context(|| format!("binding {}:{}", cli.ip, cli.port))?;
    // tests bind port 0 and read the real address from here
    eprintln!("listening on {}", server.local_addr()?);
    server.serve()?;
    Ok(())
}
