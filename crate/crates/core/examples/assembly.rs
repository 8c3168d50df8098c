//! A limb parked on a palette reaches over, grips a free wheel and lets go
//! of the palette. Also shows the diagnostic when the wheel is 10 cm off.

use motion_stack::ops::{assembly_scenario, AssemblyOptions};
use nalgebra::Vector3;

fn main() -> anyhow::Result<()> {
    let report = assembly_scenario(&AssemblyOptions::default())?;
    println!(
        "pose reached {:.2} s, wheel gripped {:.2} s, palette released {:.2} s",
        report.t_reached, report.t_attached, report.t_released
    );
    println!(
        "new assembly: {:?}, {} motors, same as minimal: {}",
        report.description.attachments, report.motor_count, report.matches_minimal
    );
    println!("wheel neighbours {:?}, limb neighbours {:?}", report.wheel_neighbours, report.limb_neighbours);

    let off = AssemblyOptions {
        fixture_shift: Vector3::new(0.1, 0.0, 0.0),
        ..AssemblyOptions::default()
    };
    match assembly_scenario(&off) {
        Ok(_) => println!("shifted wheel was gripped anyway"),
        Err(e) => println!("shifted wheel: {e}"),
    }
    Ok(())
}
