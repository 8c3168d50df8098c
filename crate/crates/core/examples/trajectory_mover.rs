//! The body computer asks the mover to bring three limbs to new
//! configurations. Each limb gets a trajectory timed so they all arrive
//! together.

use std::path::PathBuf;

use motion_stack::ops::{run_scenario, Scenario};
use motion_stack::stack::EventKind;

fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/tricycle_mover.json");
    let record = run_scenario(&Scenario::load(&path)?)?;
    for e in &record.events {
        if matches!(e.kind, EventKind::PlanIssued | EventKind::TrajectoryDone) {
            println!("{:>5.2} s {:<9} {:?} {}", e.t, e.node, e.kind, e.detail);
        }
    }
    for limb in ["limb1", "limb2", "limb3"] {
        let last = record.joint_trace(&format!("{limb}/j4")).last().map(|s| s.angle).unwrap_or(0.0);
        println!("{limb}/j4 ends at {last:.3} rad");
    }
    Ok(())
}
