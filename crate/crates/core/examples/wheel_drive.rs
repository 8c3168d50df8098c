//! Direct wheel drive over a link that drops out. The wheel keeps its last
//! speeds through the outage.

use motion_stack::bus::LinkCondition;
use motion_stack::ctrl::StrategyKind;
use motion_stack::model::{presets, Level, RoleEntry, RoleTable};
use motion_stack::ops::{figures::inline, LinkSpec, Scenario, World, WorldOptions};
use motion_stack::stack::{ScriptEvent, ScriptOp};

fn main() -> anyhow::Result<()> {
    let mut roles = RoleTable::new();
    roles.insert("wheel1-pc".into(), RoleEntry::new(&[Level::WheelDirect], None).with_module("wheel1"));
    roles.insert("operator-A".into(), RoleEntry::new(&[Level::Operator], None));
    let scenario = Scenario {
        description: inline(&presets::minimal()),
        role_table: roles,
        links: vec![LinkSpec {
            a: "operator-A".into(),
            b: "wheel1-pc".into(),
            condition: LinkCondition::with_gaps(&[(1.0, 2.0)]),
            directed: false,
        }],
        operator_script: vec![
            ScriptEvent::new(0.2, "operator-A", ScriptOp::Down, "wheel1/drive", 2.0),
            ScriptEvent::new(0.5, "operator-A", ScriptOp::Down, "wheel1/turn", 0.5),
            ScriptEvent::new(1.5, "operator-A", ScriptOp::Up, "wheel1/turn", 0.0),
            ScriptEvent::new(1.5, "operator-A", ScriptOp::Up, "wheel1/drive", 0.0),
        ],
        duration: 3.0,
        seed: 1,
        strategy: StrategyKind::ClampedIntegral,
        parameters: Default::default(),
        crashes: vec![],
        plant: Default::default(),
        base_dir: None,
    };
    let mut world = World::new(&scenario, WorldOptions::default())?;
    for _ in 0..6 {
        world.run_for(0.5)?;
        let w = &world.plant.wheels["wheel1"];
        println!(
            "{:.1} s: speeds ({:.2}, {:.2}) rad/s, at ({:.3}, {:.3}) heading {:.3}",
            world.now(),
            w.left_speed,
            w.right_speed,
            w.x,
            w.y,
            w.heading
        );
    }
    Ok(())
}
