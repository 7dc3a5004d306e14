//! Run one scenario: attack suite plus the four swarm runs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::{json, Value};
use tbrd_core::airsim::{run_attack_suite, Scenario, SwarmReport, BUILTIN_SCENARIOS};

#[derive(Parser)]
#[command(
    name = "tbrd-sim",
    about = "Simulate a scenario and write metrics, trajectories and verdicts"
)]
struct Cli {
    /// Shipped scenario id or a TOML file.
    #[arg(long, required_unless_present = "list")]
    scenario: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
    /// Skip the swarm runs.
    #[arg(long)]
    no_swarm: bool,
    /// Print the shipped scenario ids and exit.
    #[arg(long)]
    list: bool,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if cli.list {
        for (id, _) in BUILTIN_SCENARIOS {
            println!("{id}");
        }
        return Ok(());
    }
    let scn = Scenario::load(cli.scenario.as_deref().unwrap_or_default())?;
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;

    let suite = run_attack_suite(&scn, cli.seed)?;
    let mut log = BufWriter::new(File::create(cli.out.join("verdicts.jsonl"))?);
    for ev in &suite.events {
        serde_json::to_writer(&mut log, ev)?;
        log.write_all(b"\n")?;
    }
    log.flush()?;

    let swarm = if cli.no_swarm {
        Value::Null
    } else {
        let rep = SwarmReport::generate(&scn, cli.seed)?;
        let mut csv = BufWriter::new(File::create(cli.out.join("trajectories.csv"))?);
        writeln!(csv, "auth_mode,attacked,agent,step,x_m,y_m")?;
        let mut runs = Vec::new();
        for run in &rep.runs {
            let mode = serde_json::to_value(run.auth_mode)?;
            let mode = mode.as_str().unwrap_or_default();
            for (name, path) in run.agents.iter().zip(&run.paths) {
                for (k, p) in path.iter().enumerate() {
                    writeln!(csv, "{mode},{},{name},{k},{:.3},{:.3}", run.attacked, p[0], p[1])?;
                }
            }
            let mut v = serde_json::to_value(run)?;
            if let Some(o) = v.as_object_mut() {
                o.remove("paths");
            }
            runs.push(v);
        }
        csv.flush()?;
        json!({
            "params": rep.params,
            "runs": runs,
            "deviation_none_m": rep.deviation_none,
            "deviation_tbrd_m": rep.deviation_tbrd,
        })
    };

    let metrics = json!({
        "scenario": scn.id,
        "seed": cli.seed,
        "attack_suite": suite,
        "swarm": swarm,
    });
    fs::write(
        cli.out.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)?,
    )?;
    eprintln!("wrote {}", cli.out.display());
    Ok(())
}
