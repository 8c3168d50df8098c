//! Coarse move at full speed, then short presses that each add the same
//! small step.

use motion_stack::ops::{fig14_task, Fig14Script};

fn main() -> anyhow::Result<()> {
    let script = Fig14Script::default();
    let report = fig14_task(&script)?;
    println!("goal {:.3} rad, coarse move {:.4} rad", report.goal, report.coarse_displacement);
    for (i, d) in report.press_displacements.iter().enumerate() {
        println!("  press {:>2}: {:+.4} rad (expected {:.4})", i + 1, d, report.expected_per_press);
    }
    println!(
        "final {:.4} rad, error {:.4}, proportional {}, monotone {}",
        report.final_position, report.final_error, report.proportional, report.monotone
    );
    if let Some(dir) = std::env::args().nth(1) {
        report.write(dir.as_ref())?;
    }
    Ok(())
}
