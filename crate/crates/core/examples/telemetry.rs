//! Mission-control view of the dragon run where one limb computer crashes
//! halfway through.

use std::path::PathBuf;

use motion_stack::ops::{run_scenario, telemetry::telemetry_table, telemetry_aggregate, Scenario};

fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/dragon_crash.json");
    let scenario = Scenario::load(&path)?;
    let record = run_scenario(&scenario)?;
    for t in [2.0, record.duration] {
        let seen: Vec<_> = record.telemetry.iter().filter(|f| f.t <= t).cloned().collect();
        println!("t = {t:.1} s");
        print!("{}", telemetry_table(&telemetry_aggregate(&seen, t)));
    }
    Ok(())
}
