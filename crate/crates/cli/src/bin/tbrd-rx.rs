//! The observer: verify received packs against the USS and print one JSON
//! verdict per line.

use std::fs::File;
use std::io::{self, BufRead, BufWriter, Write};
use std::net::{SocketAddr, UdpSocket};
use std::path::PathBuf;
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{Context, Result};
use clap::Parser;
use tbrd_cli::{now_ms, Config};
use tbrd_core::transmitter::DEFAULT_UDP_PORT;
use tbrd_core::uss::UssClient;
use tbrd_core::verifier::{Outcome, Verdict, Verifier, VerifierConfig};

#[derive(Parser)]
#[command(name = "tbrd-rx", about = "Verify broadcast Remote ID packs")]
struct Cli {
    /// Log every pack and USS exchange to stderr.
    #[arg(short, long)]
    verbose: bool,
    /// Listen for UDP datagrams instead of hex lines on stdin.
    #[arg(short, long)]
    udp: bool,
    #[arg(short, long, default_value = "rx_config.ini")]
    config: PathBuf,
    /// Verdict output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// USS address; overrides [uss] addr.
    #[arg(long)]
    uss: Option<String>,
    /// Stop after this many seconds (UDP mode runs until killed otherwise).
    #[arg(long)]
    duration_s: Option<u64>,
    /// Also print `pending` records.
    #[arg(long)]
    pending: bool,
}

enum Input {
    Pack(Vec<u8>, u64),
    Bad(String),
    Eof,
}

fn spawn_stdin(tx: mpsc::Sender<Input>) {
    thread::spawn(move || {
        for line in io::stdin().lock().lines() {
            let Ok(line) = line else { break };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let t = now_ms();
            let msg = match hex::decode(line) {
                Ok(raw) => Input::Pack(raw, t),
                Err(e) => Input::Bad(format!("not hex: {e}")),
            };
            if tx.send(msg).is_err() {
                return;
            }
        }
        let _ = tx.send(Input::Eof);
    });
}

fn spawn_udp(tx: mpsc::Sender<Input>, bind: SocketAddr) -> Result<()> {
    let sock = UdpSocket::bind(bind).with_context(|| format!("binding {bind}"))?;
    log::info!("listening on {}", sock.local_addr()?);
    thread::spawn(move || {
        let mut buf = [0u8; 2048];
        loop {
            match sock.recv_from(&mut buf) {
                Ok((n, _)) => {
                    if tx.send(Input::Pack(buf[..n].to_vec(), now_ms())).is_err() {
                        return;
                    }
                }
                Err(e) => log::warn!("udp receive: {e}"),
            }
        }
    });
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    tbrd_cli::init_logging(cli.verbose);
    if let Err(e) = run(cli) {
        eprintln!("tbrd-rx: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let explicit = cli.config.as_os_str() != "rx_config.ini";
    let cfg = Config::load(&cli.config, explicit)?;
    let addr = cli
        .uss
        .clone()
        .or_else(|| cfg.get("uss", "addr").map(String::from))
        .unwrap_or_else(|| "127.0.0.1:5555".into());
    let defaults = VerifierConfig::default();
    let vcfg = VerifierConfig {
        observer_id: cfg
            .get("rx", "observer_id")
            .map(String::from)
            .unwrap_or(defaults.observer_id),
        max_skew_ms: cfg.parse("rx", "max_skew_ms")?.unwrap_or(defaults.max_skew_ms),
        expiry_ms: cfg.parse("rx", "expiry_ms")?.unwrap_or(defaults.expiry_ms),
        replay_log: cfg.get("rx", "replay_log").map(PathBuf::from),
    };
    let retry = Duration::from_millis(cfg.parse("rx", "retry_ms")?.unwrap_or(1000));
    let verifier = Verifier::new(UssClient::new(addr.as_str())?, vcfg)?;

    let mut out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    let emit = |vs: Vec<Verdict>, out: &mut dyn Write| -> Result<()> {
        for v in vs {
            if v.outcome == Outcome::Pending && !cli.pending {
                continue;
            }
            log::info!("{:?} {:?} i={:?}: {}", v.outcome, v.uas_id, v.interval, v.detail);
            serde_json::to_writer(&mut *out, &v)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    };

    let (tx, rx) = mpsc::channel();
    if cli.udp {
        let bind: SocketAddr = cfg
            .parse("rx", "udp_bind")?
            .unwrap_or_else(|| SocketAddr::from(([0, 0, 0, 0], DEFAULT_UDP_PORT)));
        spawn_udp(tx, bind)?;
    } else {
        spawn_stdin(tx);
    }

    let deadline = cli.duration_s.map(|s| Instant::now() + Duration::from_secs(s));
    loop {
        let wait = match deadline {
            Some(d) => match d.checked_duration_since(Instant::now()) {
                Some(left) => left.min(retry),
                None => break,
            },
            None => retry,
        };
        match rx.recv_timeout(wait) {
            Ok(Input::Pack(raw, t)) => emit(verifier.receive(&raw, t), &mut *out)?,
            Ok(Input::Bad(e)) => log::warn!("skipping input line: {e}"),
            Ok(Input::Eof) | Err(RecvTimeoutError::Disconnected) => break,
            Err(RecvTimeoutError::Timeout) => emit(verifier.retry(now_ms()), &mut *out)?,
        }
    }
    // last chance for anything waiting on a USS that was down
    emit(verifier.retry(now_ms()), &mut *out)?;
    Ok(())
}
