//! Zero-offset calibration: the calibrator homes a joint slowly until the
//! reflector fires and takes the encoder reading there as the offset.

use std::path::PathBuf;

use motion_stack::ops::{run_scenario, Scenario};
use motion_stack::plant::REFLECTOR_WIDTH;
use motion_stack::stack::EventKind;

fn main() -> anyhow::Result<()> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/scenarios/calibration.json");
    let scenario = Scenario::load(&path)?;
    let record = run_scenario(&scenario)?;
    for (joint, offset) in &scenario.plant.zero_offsets {
        println!("{joint}: true zero offset {offset:.4}");
        println!(
            "  reflector edge reads {:.4} when met from above",
            offset + REFLECTOR_WIDTH / 2.0
        );
    }
    for e in record.events.iter().filter(|e| e.node == "calib-pc") {
        println!("{:>5.2} s {:?} {}", e.t, e.kind, e.detail);
    }
    if !record.events.iter().any(|e| e.kind == EventKind::CalibrationDone) {
        println!("no edge found");
    }
    Ok(())
}
