use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use motion_stack::model::{motor_count, parse_description};
use motion_stack::ops::{self, figures, AssemblyOptions, Scenario};

#[derive(Parser)]
#[command(name = "motion-stack", version, about = "Simulated modular-robot motion stack")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario and write its traces.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the four remote strategies across a link outage.
    Fig13 {
        #[arg(long)]
        out: PathBuf,
    },
    /// Coarse move then brief presses to a goal angle.
    Fig14 {
        #[arg(long)]
        out: PathBuf,
    },
    /// Limb grips a free wheel and leaves its palette.
    Assembly {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario in real time behind a websocket at /ws.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
    /// Check a robot description file.
    Validate {
        #[arg(long)]
        desc: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, out, seed } => {
            let mut s = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let record = ops::run_scenario(&s)?;
            record.write(&out)?;
            println!(
                "simulated {:.2} s, {} deliveries, {} violations, state {}",
                record.duration,
                record.delivery_log.len(),
                record.violations.len(),
                record.final_state_hash
            );
        }
        Cmd::Fig13 { out } => {
            let suite = ops::fig13_suite()?;
            suite.write(&out)?;
            print!("{}", suite.summary_csv());
        }
        Cmd::Fig14 { out } => {
            let report = ops::fig14_task(&figures::Fig14Script::default())?;
            report.write(&out)?;
            println!(
                "final {:.4} rad (error {:.4}), presses {:?}, monotone {}",
                report.final_position,
                report.final_error,
                report.press_displacements.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>(),
                report.monotone
            );
        }
        Cmd::Assembly { out } => {
            let report = ops::assembly_scenario(&AssemblyOptions::default())?;
            report.write(&out)?;
            println!(
                "reached {:.2} s, attached {:.2} s, released {:.2} s; {} motors, minimal: {}, wheel neighbours {:?}",
                report.t_reached,
                report.t_attached,
                report.t_released,
                report.motor_count,
                report.matches_minimal,
                report.wheel_neighbours
            );
        }
        Cmd::Serve { scenario, port } => {
            let s = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
            let addr = SocketAddr::from(([0, 0, 0, 0], port));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let handle = ops::live::spawn(&s, addr).await?;
                println!("serving ws://{}/ws", handle.addr);
                handle.join().await;
                Ok::<_, ops::OpsError>(())
            })?;
        }
        Cmd::Validate { desc } => {
            let text = std::fs::read_to_string(&desc).with_context(|| format!("reading {}", desc.display()))?;
            match parse_description(&text) {
                Ok(d) => println!(
                    "{}: {} modules, {} chains, {} motors",
                    d.name,
                    d.modules.len(),
                    d.chains.len(),
                    motor_count(&d)
                ),
                Err(e) => bail!("{}: {e}", desc.display()),
            }
        }
    }
    Ok(())
}
