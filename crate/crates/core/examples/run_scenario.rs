//! Load a scenario file, simulate it and summarise the run.
//!
//! cargo run --example run_scenario -- [scenario.json] [out_dir]

use std::path::PathBuf;

use motion_stack::ops::{run_scenario, Scenario};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/minimal_teleop.json")
    });
    let scenario = Scenario::load(&path)?;
    let record = run_scenario(&scenario)?;
    println!(
        "{}: {:.2} s, {} hosts, {} deliveries, {} truth samples",
        path.display(),
        record.duration,
        scenario.role_table.len(),
        record.delivery_log.len(),
        record.truth.len()
    );
    for e in &record.events {
        println!("  {:>6.2} {:<12} {:?} {}", e.t, e.node, e.kind, e.detail);
    }
    println!("violations: {}, state hash {}", record.violations.len(), record.final_state_hash);
    if let Some(dir) = args.next() {
        record.write(&PathBuf::from(dir))?;
    }
    Ok(())
}
