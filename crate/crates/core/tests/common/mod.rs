#![allow(dead_code)]

use std::path::PathBuf;

use motion_stack::bus::LinkCondition;
use motion_stack::ctrl::StrategyKind;
use motion_stack::model::{Level, RobotDescription, RoleEntry, RoleTable};
use motion_stack::ops::figures::inline;
use motion_stack::ops::{LinkSpec, Scenario};
use motion_stack::stack::StackParams;

pub fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn load(name: &str) -> Scenario {
    Scenario::load(&data(&format!("scenarios/{name}.json"))).expect("bundled scenario loads")
}

/// One limb computer per chain plus `operator-A`; no links, no script.
pub fn bare(desc: &RobotDescription, duration: f64) -> Scenario {
    let mut roles = RoleTable::new();
    for chain in &desc.chains {
        roles.insert(
            format!("{}-pc", chain.module),
            RoleEntry::new(&[Level::Joint, Level::Ik, Level::Limb], Some(&chain.module)),
        );
    }
    roles.insert("operator-A".into(), RoleEntry::new(&[Level::Operator], None));
    Scenario {
        description: inline(desc),
        role_table: roles,
        links: vec![],
        operator_script: vec![],
        duration,
        seed: 0,
        strategy: StrategyKind::ClampedIntegral,
        parameters: StackParams::default(),
        crashes: vec![],
        plant: Default::default(),
        base_dir: None,
    }
}

pub fn link(a: &str, b: &str, condition: LinkCondition) -> LinkSpec {
    LinkSpec {
        a: a.into(),
        b: b.into(),
        condition,
        directed: false,
    }
}
