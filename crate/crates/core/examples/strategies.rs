//! The four remote-control strategies driving a simulated joint through a
//! 0.4 s stretch of stale readings, without any bus.
//!
//! The operator holds 0.3 rad/s for one second. While readings are stale
//! the controller keeps its last value of `y`.

use motion_stack::ctrl::{local_joint_step, CommandOut, LocalJoint, StrategyInput, StrategyKind, StrategyParams, StrategyState};
use motion_stack::model::JOINT_V_MAX;

const TICK: f64 = 0.02;

fn main() -> anyhow::Result<()> {
    println!("strategy          requested  reached  max|u-y|");
    for kind in StrategyKind::ALL {
        let mut state = StrategyState::new(kind, StrategyParams::default(), 0.0, 0.0);
        let mut joint = LocalJoint::new(0.0, JOINT_V_MAX, [-3.0, 3.0]);
        let mut y = 0.0;
        let mut gap: f64 = 0.0;
        for k in 1..=100 {
            let t = k as f64 * TICK;
            let stale = (0.4..0.8).contains(&t);
            if !stale {
                y = joint.angle;
            }
            let r_dot = if t <= 1.0 { 0.3 } else { 0.0 };
            let cmd = state.step(&StrategyInput { t, y, r_dot })?;
            if let CommandOut::Position(u) = cmd {
                gap = gap.max((u - y).abs());
            }
            joint = local_joint_step(joint, Some(cmd), TICK)?;
        }
        println!("{:<16}  {:>9.3}  {:>7.3}  {:>8.3}", kind.name(), 0.3, joint.angle, gap);
    }
    Ok(())
}
