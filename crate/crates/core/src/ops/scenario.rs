//! Scenario files: the robot, who runs what, the network, and the operator's
//! timeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::OpsError;
use crate::bus::LinkCondition;
use crate::ctrl::StrategyKind;
use crate::kin::Pose;
use crate::model::{chain_for_node, parse_description, Level, ModuleKind, RobotDescription, RoleTable};
use crate::plant::Battery;
use crate::stack::operator::{parse_target, Target};
use crate::stack::{ScriptEvent, ScriptOp, StackParams};

/// A description file path (relative to the scenario), an inline document,
/// or a list of either for worlds holding several separate assemblies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DescriptionSource {
    Path(String),
    List(Vec<DescriptionSource>),
    Inline(serde_json::Map<String, serde_json::Value>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub condition: LinkCondition,
    /// Apply only from `a` to `b`.
    #[serde(default)]
    pub directed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrashSpec {
    pub node: String,
    pub t: f64,
}

/// Initial hardware state. Keys are `module/joint`, module ids or
/// `module.fixture`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlantSetup {
    #[serde(default)]
    pub initial_angles: BTreeMap<String, f64>,
    #[serde(default)]
    pub zero_offsets: BTreeMap<String, f64>,
    #[serde(default)]
    pub sensor_noise: f64,
    #[serde(default)]
    pub batteries: BTreeMap<String, Battery>,
    #[serde(default)]
    pub limb_bases: BTreeMap<String, Pose>,
    #[serde(default)]
    pub fixture_poses: BTreeMap<String, Pose>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub description: DescriptionSource,
    pub role_table: RoleTable,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub operator_script: Vec<ScriptEvent>,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyKind,
    #[serde(default)]
    pub parameters: StackParams,
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    #[serde(default)]
    pub plant: PlantSetup,
    /// Directory that relative description paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_strategy() -> StrategyKind {
    StrategyKind::ClampedIntegral
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> OpsError {
    OpsError::Invalid {
        path: path.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, OpsError> {
        serde_json::from_str(text).map_err(|e| OpsError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, OpsError> {
        let text = std::fs::read_to_string(path)?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Load and validate every referenced description.
    pub fn descriptions(&self) -> Result<Vec<RobotDescription>, OpsError> {
        let mut out = Vec::new();
        self.collect(&self.description, "description", &mut out)?;
        if out.is_empty() {
            return Err(invalid("description", "no descriptions"));
        }
        Ok(out)
    }

    fn collect(&self, src: &DescriptionSource, path: &str, out: &mut Vec<RobotDescription>) -> Result<(), OpsError> {
        match src {
            DescriptionSource::Path(p) => {
                let full = match &self.base_dir {
                    Some(dir) => dir.join(p),
                    None => PathBuf::from(p),
                };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| invalid(path, format!("{}: {e}", full.display())))?;
                out.push(parse_description(&text).map_err(|e| invalid(path, e.to_string()))?);
            }
            DescriptionSource::Inline(map) => {
                let text = serde_json::Value::Object(map.clone()).to_string();
                out.push(parse_description(&text).map_err(|e| invalid(path, e.to_string()))?);
            }
            DescriptionSource::List(items) => {
                for (i, item) in items.iter().enumerate() {
                    self.collect(item, &format!("{path}[{i}]"), out)?;
                }
            }
        }
        Ok(())
    }

    /// Check every cross-reference. Errors name the offending field.
    pub fn validate(&self) -> Result<RobotDescription, OpsError> {
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(invalid("duration", "must be positive"));
        }
        let p = &self.parameters;
        if !(p.tick > 0.0) {
            return Err(invalid("parameters.tick", "must be positive"));
        }
        if !(p.delta_e > 0.0) {
            return Err(invalid("parameters.delta_e", "must be positive"));
        }
        if !(p.delta_offset > 0.0) {
            return Err(invalid("parameters.delta_offset", "must be positive"));
        }
        if matches!(p.timeout, Some(t) if !(t > 0.0)) {
            return Err(invalid("parameters.timeout", "must be positive or null"));
        }
        let world = merge_descriptions(&self.descriptions()?);
        if self.role_table.is_empty() {
            return Err(invalid("role_table", "no nodes"));
        }
        for (node, entry) in &self.role_table {
            let path = format!("role_table.{node}");
            chain_for_node(&world, node, &self.role_table).map_err(|e| invalid(&path, e.to_string()))?;
            if entry.levels.contains(&Level::WheelDirect) {
                let ok = entry
                    .module
                    .as_deref()
                    .and_then(|m| world.module(m))
                    .is_some_and(|m| m.kind == ModuleKind::Wheel);
                if !ok {
                    return Err(invalid(format!("{path}.module"), "wheel-direct needs a wheel module"));
                }
            }
            if let Some(m) = &entry.module {
                if world.module(m).is_none() {
                    return Err(invalid(format!("{path}.module"), format!("unknown module {m}")));
                }
            }
        }
        let known = |n: &str| self.role_table.contains_key(n);
        for (i, link) in self.links.iter().enumerate() {
            for (field, node) in [("a", &link.a), ("b", &link.b)] {
                if !known(node) {
                    return Err(invalid(format!("links[{i}].{field}"), format!("unknown node {node}")));
                }
            }
            link.condition
                .validate()
                .map_err(|e| invalid(format!("links[{i}].condition"), e.to_string()))?;
        }
        for (i, ev) in self.operator_script.iter().enumerate() {
            let path = format!("operator_script[{i}]");
            if !(ev.t >= 0.0) {
                return Err(invalid(format!("{path}.t"), "must be non-negative"));
            }
            let runs_operator = self
                .role_table
                .get(&ev.operator)
                .is_some_and(|e| e.levels.contains(&Level::Operator));
            if !runs_operator {
                return Err(invalid(
                    format!("{path}.operator"),
                    format!("{} is not an operator node", ev.operator),
                ));
            }
            let target = parse_target(&world, &ev.target).map_err(|e| invalid(format!("{path}.target"), e))?;
            let fits = match ev.op {
                ScriptOp::Down | ScriptOp::Up => {
                    matches!(target, Target::Joint { .. } | Target::Ik { .. } | Target::WheelDrive { .. } | Target::WheelTurn { .. })
                }
                ScriptOp::Grip => matches!(target, Target::Gripper { .. }),
                ScriptOp::Pose => matches!(target, Target::Limb { .. }) && ev.pose.is_some(),
                ScriptOp::Trajectory => matches!(target, Target::Limb { .. }),
                ScriptOp::Plan => matches!(target, Target::Mover) && ev.targets.is_some(),
                ScriptOp::Calibrate => matches!(target, Target::Joint { .. }) && ev.speed != 0.0,
            };
            if !fits {
                return Err(invalid(path, format!("{:?} cannot act on {}", ev.op, ev.target)));
            }
        }
        for (i, c) in self.crashes.iter().enumerate() {
            if !known(&c.node) {
                return Err(invalid(format!("crashes[{i}].node"), format!("unknown node {}", c.node)));
            }
            if !(c.t >= 0.0) {
                return Err(invalid(format!("crashes[{i}].t"), "must be non-negative"));
            }
        }
        let joint_exists = |key: &str| {
            key.split_once('/')
                .and_then(|(m, j)| world.module(m).map(|m| m.joints.iter().any(|x| x.name == j)))
                .unwrap_or(false)
        };
        for (field, map) in [
            ("plant.initial_angles", &self.plant.initial_angles),
            ("plant.zero_offsets", &self.plant.zero_offsets),
        ] {
            if let Some(k) = map.keys().find(|k| !joint_exists(k)) {
                return Err(invalid(format!("{field}.{k}"), "unknown joint"));
            }
        }
        if let Some(k) = self.plant.batteries.keys().find(|k| world.module(k).is_none()) {
            return Err(invalid(format!("plant.batteries.{k}"), "unknown module"));
        }
        if let Some(k) = self.plant.limb_bases.keys().find(|k| world.chain(k).is_none()) {
            return Err(invalid(format!("plant.limb_bases.{k}"), "unknown limb"));
        }
        let fixture_exists = |k: &str| {
            k.split_once('.')
                .and_then(|(m, f)| world.module(m).map(|m| m.has_fixture(f)))
                .unwrap_or(false)
        };
        if let Some(k) = self.plant.fixture_poses.keys().find(|k| !fixture_exists(k)) {
            return Err(invalid(format!("plant.fixture_poses.{k}"), "unknown fixture"));
        }
        Ok(world)
    }
}

/// Union of several assemblies, used to resolve ids across all of them.
pub fn merge_descriptions(descs: &[RobotDescription]) -> RobotDescription {
    if descs.len() == 1 {
        return descs[0].clone();
    }
    RobotDescription {
        name: descs.iter().map(|d| d.name.as_str()).collect::<Vec<_>>().join("+"),
        modules: descs.iter().flat_map(|d| d.modules.clone()).collect(),
        attachments: descs.iter().flat_map(|d| d.attachments.clone()).collect(),
        chains: descs.iter().flat_map(|d| d.chains.clone()).collect(),
    }
}
