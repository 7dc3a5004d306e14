//! The UAS transmitter: one authenticated pack per interval, to stdout as
//! hex lines or over UDP.

use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tbrd_cli::Config;
use tbrd_core::provision::KeysFile;
use tbrd_core::transmitter::{
    bench, Channel, HexChannel, ScriptTelemetry, StaticTelemetry, SystemClock, TelemetrySample,
    TelemetrySource, Transmitter, TxConfig, TxOutcome, UdpChannel, DEFAULT_UDP_PORT,
};
use tbrd_core::uss::{MissionService, UssClient};

#[derive(Parser)]
#[command(name = "tbrd-tx", about = "Broadcast authenticated Remote ID packs")]
struct Cli {
    /// Broadcast a fixed sample from the [static] section.
    #[arg(short, long = "static")]
    static_: bool,
    #[arg(short, long)]
    verbose: bool,
    /// Send packs as UDP datagrams instead of hex lines on stdout.
    #[arg(short, long)]
    udp: bool,
    #[arg(short, long, default_value = "tx_config.ini")]
    config: PathBuf,
    /// Keys file; overrides [tx] keys.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Write the transmit log as JSON here when done.
    #[arg(long)]
    log: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Option<Cmd>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time HMAC tagging against P-521 signing on this host.
    Bench {
        #[arg(long, default_value_t = 104)]
        payload: usize,
        #[arg(long, default_value_t = 1000)]
        iterations: u32,
    },
}

fn static_sample(cfg: &Config) -> Result<TelemetrySample> {
    let mut s = TelemetrySample::default();
    for (key, field) in [
        ("lat_deg", &mut s.lat_deg),
        ("lon_deg", &mut s.lon_deg),
        ("alt_m", &mut s.alt_m),
        ("speed_mps", &mut s.speed_mps),
        ("direction_deg", &mut s.direction_deg),
        ("vspeed_mps", &mut s.vspeed_mps),
        ("operator_lat_deg", &mut s.operator_lat_deg),
        ("operator_lon_deg", &mut s.operator_lon_deg),
    ] {
        if let Some(v) = cfg.parse("static", key)? {
            *field = v;
        }
    }
    Ok(s)
}

fn tx_config(cfg: &Config, keys: &KeysFile) -> Result<TxConfig> {
    let mut tc = TxConfig::default();
    if let Some(g) = cfg.parse("tx", "guard_ms")? {
        tc.guard_ms = g;
    }
    tc.fallback_intervals = match cfg.get("tx", "fallback_intervals") {
        None => tc.fallback_intervals,
        Some("forever") => None,
        Some(v) => Some(
            v.parse()
                .with_context(|| format!("[tx] fallback_intervals = {v:?}"))?,
        ),
    };
    // the keys file is authoritative; the config may only restate it
    if let Some(t) = cfg.parse::<u64>("tx", "t_int_ms")? {
        if t != keys.t_int_ms {
            bail!("[tx] t_int_ms = {t} but the keys file says {}", keys.t_int_ms);
        }
    }
    if let Some(d) = cfg.parse::<u32>("tx", "d")? {
        if d != keys.d {
            bail!("[tx] d = {d} but the keys file says {}", keys.d);
        }
    }
    Ok(tc)
}

fn main() {
    let cli = Cli::parse();
    tbrd_cli::init_logging(cli.verbose);
    if let Err(e) = run(cli) {
        eprintln!("tbrd-tx: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(Cmd::Bench { payload, iterations }) = cli.cmd {
        let r = bench(payload, iterations)?;
        println!("{}", serde_json::to_string_pretty(&r)?);
        return Ok(());
    }
    let explicit = cli.config.as_os_str() != "tx_config.ini";
    let cfg = Config::load(&cli.config, explicit)?;

    let keys_path = cli
        .keys
        .clone()
        .or_else(|| cfg.get("tx", "keys").map(PathBuf::from))
        .context("no keys file; pass --keys or set [tx] keys")?;
    let keys = KeysFile::read(&keys_path).with_context(|| format!("reading {}", keys_path.display()))?;
    let mut tx = Transmitter::new(keys.clone(), tx_config(&cfg, &keys)?)?;

    let mut telemetry: Box<dyn TelemetrySource> = if cli.static_ {
        Box::new(StaticTelemetry(static_sample(&cfg)?))
    } else {
        let script = cfg
            .get("tx", "script")
            .context("no telemetry; pass --static or set [tx] script")?;
        Box::new(ScriptTelemetry::from_path(script.as_ref())?)
    };

    let mut channel: Box<dyn Channel> = if cli.udp {
        let dest: SocketAddr = cfg
            .parse("tx", "udp_dest")?
            .unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], DEFAULT_UDP_PORT)));
        log::info!("sending to {dest}");
        Box::new(UdpChannel::new(dest)?)
    } else {
        Box::new(HexChannel(std::io::stdout()))
    };

    let uss = match (cfg.get("uss", "addr"), cfg.get("uss", "handle")) {
        (Some(addr), Some(handle)) => Some((UssClient::new(addr)?, handle.to_owned())),
        _ => None,
    };
    let mut start_err = None;
    let log = tx.run(&SystemClock, &mut *telemetry, &mut channel, |t0| {
        log::info!("mission t0 = {t0}");
        if let Some((c, h)) = &uss {
            if let Err(e) = c.start(h, t0) {
                start_err = Some(e);
            }
        }
    });
    if let Some(e) = start_err {
        log::warn!("could not report start to the USS: {e}");
    }
    for e in &log.entries {
        match &e.outcome {
            TxOutcome::Sent => log::debug!("interval {} sent at {}", e.interval, e.t_ms),
            other => log::warn!("interval {}: {other:?}", e.interval),
        }
    }
    if let Some(p) = &cli.log {
        std::fs::write(p, serde_json::to_string_pretty(log)?)?;
    }
    Ok(())
}
