//! Self-assembly: a limb parked on a palette reaches a free wheel, grips it
//! and lets go of the palette.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use nalgebra::Vector3;
use serde::Serialize;

use super::figures::inline;
use super::scenario::{DescriptionSource, Scenario};
use super::world::{RunRecord, World, WorldOptions};
use super::OpsError;
use crate::ctrl::StrategyKind;
use crate::kin::{forward_kinematics, Pose};
use crate::model::{motor_count, presets, Level, ModuleKind, RobotDescription, RoleEntry, RoleTable};
use crate::plant::{FIXTURE_WIDTH, GRASP_ANGLE_TOL, GRASP_POSITION_TOL, GRIPPER_MAX_OPENING, GRIPPER_SPEED};
use crate::stack::{EventKind, ScriptEvent, ScriptOp, StackParams};

pub const OPERATOR: &str = "operator-A";
pub const LIMB: &str = "limb1";
pub const WHEEL: &str = "wheel1";
pub const FIXTURE: &str = "wheel1.fixture1";

#[derive(Debug, Clone)]
pub struct AssemblyOptions {
    /// Joint configuration that puts `gripper2` on the wheel's fixture.
    pub q_goal: [f64; 7],
    /// Displacement of the wheel fixture from that pose.
    pub fixture_shift: Vector3<f64>,
    pub seed: u64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            q_goal: [0.0, 0.6, 0.0, 0.8, 0.0, 0.5, 0.0],
            fixture_shift: Vector3::zeros(),
            seed: 7,
        }
    }
}

pub fn palette_description() -> RobotDescription {
    RobotDescription::build(
        "palette".into(),
        vec![presets::body("palette"), presets::limb(LIMB)],
        vec![presets::pair("limb1.gripper1", "palette.fixture1")],
    )
    .expect("palette assembly is valid")
}

pub fn free_wheel_description() -> RobotDescription {
    RobotDescription::build("free-wheel".into(), vec![presets::wheel(WHEEL)], vec![]).expect("valid")
}

impl AssemblyOptions {
    /// Pose of the wheel fixture in the world.
    pub fn fixture_pose(&self) -> Pose {
        let desc = palette_description();
        let chain = desc.chain(LIMB).expect("limb chain");
        let tip = forward_kinematics(chain, &self.q_goal).expect("seven joints");
        Pose::new(tip.position + self.fixture_shift, tip.orientation)
    }

    /// Idle world: the assembly steps are injected as conditions are met.
    pub fn scenario(&self) -> Scenario {
        let mut roles = RoleTable::new();
        roles.insert("limb1-pc".into(), RoleEntry::new(&[Level::Joint, Level::Ik], Some(LIMB)));
        roles.insert(
            "wheel1-pc".into(),
            RoleEntry::new(&[Level::WheelDirect], None).with_module(WHEEL),
        );
        roles.insert(OPERATOR.into(), RoleEntry::new(&[Level::Operator], None));
        let mut s = Scenario {
            description: DescriptionSource::List(vec![
                inline(&palette_description()),
                inline(&free_wheel_description()),
            ]),
            role_table: roles,
            links: vec![],
            operator_script: vec![],
            duration: 30.0,
            seed: self.seed,
            strategy: StrategyKind::ClampedIntegral,
            parameters: StackParams::default(),
            crashes: vec![],
            plant: Default::default(),
            base_dir: None,
        };
        s.plant.fixture_poses.insert(FIXTURE.into(), self.fixture_pose());
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssemblyReport {
    pub t_reached: f64,
    pub t_attached: f64,
    pub t_released: f64,
    /// Connected assembly containing the wheel, rebuilt from the plant.
    pub description: RobotDescription,
    pub motor_count: u32,
    pub matches_minimal: bool,
    pub wheel_neighbours: Vec<String>,
    pub limb_neighbours: Vec<String>,
    #[serde(skip)]
    pub record: RunRecord,
}

fn wait_for(world: &mut World, limit: f64, mut done: impl FnMut(&World) -> bool) -> Result<Option<f64>, OpsError> {
    let end = world.now() + limit;
    while world.now() < end {
        world.step()?;
        if done(world) {
            return Ok(Some(world.now()));
        }
    }
    Ok(None)
}

fn has_event(world: &World, kind: EventKind, detail: &str) -> bool {
    world.events.iter().any(|e| e.kind == kind && e.detail.contains(detail))
}

/// Run the three assembly steps. A fixture out of reach of the closed
/// gripper gives [`OpsError::GraspMiss`] with the measured misalignment.
pub fn assembly_scenario(opts: &AssemblyOptions) -> Result<AssemblyReport, OpsError> {
    let scenario = opts.scenario();
    let mut world = World::new(&scenario, WorldOptions::default())?;
    let goal = {
        let chain = world.desc.chain(LIMB).expect("limb chain");
        forward_kinematics(chain, &opts.q_goal).expect("seven joints")
    };
    world.run_for(0.2)?;

    let mut pose = ScriptEvent::new(0.0, OPERATOR, ScriptOp::Pose, LIMB, 0.0);
    pose.pose = Some(goal);
    world.inject(pose);
    let t_reached = wait_for(&mut world, 20.0, |w| has_event(w, EventKind::IkReached, ""))?
        .ok_or_else(|| OpsError::GraspMiss("pose target not reached".into()))?;

    world.inject(ScriptEvent::new(0.0, OPERATOR, ScriptOp::Grip, "limb1/gripper2", -1.0));
    let close_time = GRIPPER_MAX_OPENING / GRIPPER_SPEED + 1.0;
    let Some(t_attached) = wait_for(&mut world, close_time, |w| has_event(w, EventKind::Attached, FIXTURE))? else {
        let gripper = world.plant.gripper_pose("limb1/gripper2").expect("limb gripper");
        let fixture = world.plant.fixtures[FIXTURE].pose;
        let (dp, dr) = gripper.distance(&fixture);
        let opening = world.plant.grippers["limb1/gripper2"].opening;
        return Err(OpsError::GraspMiss(format!(
            "limb1.gripper2 closed to {opening:.3} m (fixture width {FIXTURE_WIDTH} m) without contact; \
             {FIXTURE} is {dp:.3} m and {dr:.3} rad away, tolerance {GRASP_POSITION_TOL} m and {GRASP_ANGLE_TOL} rad"
        )));
    };

    world.inject(ScriptEvent::new(0.0, OPERATOR, ScriptOp::Grip, "limb1/gripper1", 1.0));
    let t_released = wait_for(&mut world, 2.0, |w| has_event(w, EventKind::Released, "palette"))?
        .ok_or_else(|| OpsError::GraspMiss("palette not released".into()))?;
    world.run_for(1.5)?;

    let description = connected_assembly(&world, WHEEL)?;
    let frames = world.telemetry.clone();
    let latest = |node: &str| {
        frames
            .iter()
            .rev()
            .find(|f| f.node == node)
            .map(|f| f.neighbours.clone())
            .unwrap_or_default()
    };
    let wheel_neighbours = latest("wheel1-pc");
    let limb_neighbours = latest("limb1-pc");
    Ok(AssemblyReport {
        t_reached,
        t_attached,
        t_released,
        motor_count: motor_count(&description),
        matches_minimal: same_structure(&description, &presets::minimal()),
        description,
        wheel_neighbours,
        limb_neighbours,
        record: world.finish(),
    })
}

/// Rebuild the description of the assembly holding `module` from the
/// plant's current attachments.
pub fn connected_assembly(world: &World, module: &str) -> Result<RobotDescription, OpsError> {
    let pairs = world.plant.attachments();
    let owner = |end: &str| end.split_once('.').map_or(end.to_string(), |(m, _)| m.to_string());
    let mut members = BTreeSet::from([module.to_string()]);
    loop {
        let before = members.len();
        for [a, b] in &pairs {
            let (ma, mb) = (owner(a), owner(b));
            if members.contains(&ma) || members.contains(&mb) {
                members.insert(ma);
                members.insert(mb);
            }
        }
        if members.len() == before {
            break;
        }
    }
    let modules = world
        .desc
        .modules
        .iter()
        .filter(|m| members.contains(&m.id))
        .cloned()
        .collect();
    let attachments = pairs
        .into_iter()
        .filter(|[a, _]| members.contains(&owner(a)))
        .collect();
    Ok(RobotDescription::build("assembled".into(), modules, attachments)?)
}

/// Same modules and attachments, treating a limb's two grippers as
/// interchangeable.
pub fn same_structure(a: &RobotDescription, b: &RobotDescription) -> bool {
    let shape = |d: &RobotDescription| {
        let kinds: BTreeMap<String, ModuleKind> = d.modules.iter().map(|m| (m.id.clone(), m.kind)).collect();
        let norm = |end: &String| match end.split_once('.') {
            Some((m, _)) if kinds.get(m) == Some(&ModuleKind::Limb) => format!("{m}.gripper"),
            _ => end.clone(),
        };
        let mut pairs: Vec<[String; 2]> = d
            .attachments
            .iter()
            .map(|[x, y]| {
                let mut p = [norm(x), norm(y)];
                p.sort();
                p
            })
            .collect();
        pairs.sort();
        (kinds, pairs)
    };
    shape(a) == shape(b)
}

impl AssemblyReport {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        self.record.write(dir)?;
        fs::write(dir.join("assembly.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(dir.join("assembled_description.json"), self.description.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gripper_swap_is_structurally_equal() {
        let swapped = RobotDescription::build(
            "m".into(),
            vec![presets::limb("limb1"), presets::wheel("wheel1")],
            vec![presets::pair("limb1.gripper2", "wheel1.fixture1")],
        )
        .unwrap();
        assert!(same_structure(&swapped, &presets::minimal()));
        assert!(!same_structure(&presets::vehicle(), &presets::minimal()));
    }
}
