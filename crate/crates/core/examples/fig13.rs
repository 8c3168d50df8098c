//! Press sequence across a 0.3 s link outage under each strategy.
//!
//! cargo run --example fig13 -- [out_dir]

use motion_stack::ops::fig13_suite;

fn main() -> anyhow::Result<()> {
    let suite = fig13_suite()?;
    print!("{}", suite.summary_csv());
    for run in &suite.runs {
        println!(
            "{:<16} max|u-y| {:.3}, press steps {:?}",
            run.strategy.name(),
            run.max_command_gap,
            run.press_displacements.iter().map(|d| format!("{d:.3}")).collect::<Vec<_>>()
        );
    }
    if let Some(dir) = std::env::args().nth(1) {
        suite.write(dir.as_ref())?;
    }
    Ok(())
}
