//! Two operators share one robot: A drives a limb joint, B drives the
//! wheel. Each command on the bus is traced back to its sender.

use std::collections::BTreeMap;
use std::path::PathBuf;

use motion_stack::ops::{run_scenario, Scenario};

fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/two_operators.json");
    let record = run_scenario(&Scenario::load(&path)?)?;
    let mut senders: BTreeMap<(String, String), usize> = BTreeMap::new();
    for r in record.delivery_log.iter().filter(|r| r.src.starts_with("operator")) {
        *senders.entry((r.src.clone(), r.topic.clone())).or_default() += 1;
    }
    for ((src, topic), n) in senders {
        println!("{src:<11} {topic:<24} {n}");
    }
    let j2 = record.joint_trace("limb1/j2");
    println!("limb1/j2 ends at {:.3} rad", j2.last().map(|s| s.angle).unwrap_or(0.0));
    Ok(())
}
