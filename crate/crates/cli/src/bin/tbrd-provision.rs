//! Mission provisioning: generate the keychain, write the keys file and
//! talk to the USS.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tbrd_cli::{now_ms, parse_time_ms, Config};
use tbrd_core::provision::{plan_mission, MissionPlan, PlannedMission, SealedSeed};
use tbrd_core::uss::{Ack, MissionService, UssClient};

#[derive(Parser)]
#[command(name = "tbrd-provision", about = "Plan, register and manage a mission")]
struct Cli {
    /// INI file with [mission], [files] and [uss] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// USS address, host:port.
    #[arg(long, global = true)]
    uss: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the keychain and keys file without contacting the USS.
    Plan(PlanArgs),
    /// Plan, then register the commitment and window with the USS.
    Register(PlanArgs),
    /// Report the mission start (time of the first broadcast).
    Start {
        #[arg(long)]
        handle: String,
        /// Epoch ms or "now".
        #[arg(long, default_value = "now")]
        t0_ms: String,
    },
    /// Report the mission end.
    End {
        #[arg(long)]
        handle: String,
        #[arg(long, default_value = "now")]
        t_end_ms: String,
    },
    /// Mark a mission invalid.
    Revoke {
        #[arg(long)]
        handle: String,
    },
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    operator_id: Option<String>,
    #[arg(long)]
    uas_id: Option<String>,
    /// Epoch ms or "now".
    #[arg(long)]
    start_ms: Option<String>,
    /// Epoch ms; alternative to --duration-s.
    #[arg(long)]
    end_ms: Option<u64>,
    #[arg(long)]
    duration_s: Option<u64>,
    #[arg(long)]
    t_int_ms: Option<u64>,
    #[arg(long)]
    d: Option<u32>,
    /// Keys file for the transmitter.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where the sealed seed is kept. Defaults to the keys file plus `.seed`.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Fixed 64-hex-digit seed. Testing only.
    #[arg(long)]
    seed_hex: Option<String>,
}

fn mission_plan(a: &PlanArgs, cfg: &Config) -> Result<MissionPlan> {
    let operator_id = a
        .operator_id
        .clone()
        .or_else(|| cfg.get("mission", "operator_id").map(String::from))
        .context("operator_id is required")?;
    let uas_id = a
        .uas_id
        .clone()
        .or_else(|| cfg.get("mission", "uas_id").map(String::from))
        .context("uas_id is required")?;
    let start_ms = match a.start_ms.as_deref().or(cfg.get("mission", "start_ms")) {
        Some(s) => parse_time_ms(s)?,
        None => now_ms(),
    };
    let end_ms = match end_of(start_ms, a.end_ms, a.duration_s)? {
        Some(e) => e,
        None => end_of(
            start_ms,
            cfg.parse("mission", "end_ms")?,
            cfg.parse("mission", "duration_s")?,
        )?
        .context("mission end is required (--end-ms or --duration-s)")?,
    };
    Ok(MissionPlan {
        operator_id,
        uas_id,
        start_ms,
        end_ms,
        t_int_ms: a.t_int_ms.or(cfg.parse("mission", "t_int_ms")?).unwrap_or(1000),
        d: a.d.or(cfg.parse("mission", "d")?).unwrap_or(1),
    })
}

fn end_of(start_ms: u64, end_ms: Option<u64>, duration_s: Option<u64>) -> Result<Option<u64>> {
    match (end_ms, duration_s) {
        (Some(_), Some(_)) => bail!("give an end time or a duration, not both"),
        (Some(e), None) => Ok(Some(e)),
        (None, Some(s)) => Ok(Some(start_ms + s * 1000)),
        (None, None) => Ok(None),
    }
}

fn plan(a: &PlanArgs, cfg: &Config) -> Result<PlannedMission> {
    let plan = mission_plan(a, cfg)?;
    let out = a
        .out
        .clone()
        .or_else(|| cfg.get("files", "keys").map(PathBuf::from))
        .context("--out <keys-file> is required")?;
    let seed = match &a.seed_hex {
        Some(h) => {
            eprintln!("warning: fixed seed from --seed-hex; anyone with it can forge this mission");
            SealedSeed::from_hex(h)?
        }
        None => SealedSeed::generate(),
    };
    let planned = plan_mission(&plan, &seed)?;
    planned
        .keys_file
        .write(&out)
        .with_context(|| format!("writing {}", out.display()))?;
    if a.seed_hex.is_none() {
        let seed_path = a
            .seed_file
            .clone()
            .or_else(|| cfg.get("files", "seed").map(PathBuf::from))
            .unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".seed");
                p.into()
            });
        seed.store(&seed_path)?;
    }
    Ok(planned)
}

fn client(cli: &Cli, cfg: &Config) -> Result<UssClient> {
    let addr = cli
        .uss
        .clone()
        .or_else(|| cfg.get("uss", "addr").map(String::from))
        .context("--uss <host:port> is required")?;
    Ok(UssClient::new(addr.as_str())?)
}

fn print_ack(ack: &Ack) {
    println!("{}", json!({"handle": ack.handle, "status": ack.status}));
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("tbrd-provision: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p, true)?,
        None => Config::default(),
    };
    match &cli.cmd {
        Cmd::Plan(a) => {
            let planned = plan(a, &cfg)?;
            println!("{}", serde_json::to_string(&planned.request)?);
        }
        Cmd::Register(a) => {
            let uss = client(&cli, &cfg)?;
            let planned = plan(a, &cfg)?;
            print_ack(&uss.register(&planned.request)?);
        }
        Cmd::Start { handle, t0_ms } => print_ack(&client(&cli, &cfg)?.start(handle, parse_time_ms(t0_ms)?)?),
        Cmd::End { handle, t_end_ms } => {
            print_ack(&client(&cli, &cfg)?.end(handle, parse_time_ms(t_end_ms)?)?)
        }
        Cmd::Revoke { handle } => print_ack(&client(&cli, &cfg)?.revoke(handle)?),
    }
    Ok(())
}
