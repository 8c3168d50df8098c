//! Modular-robot descriptions: modules, grapple attachments and the
//! kinematic chains derived from an assembly.
//!
//! A description is a JSON document naming every module of an assembly and
//! the gripper/fixture pairs that hold it together. Parsing validates the
//! module inventory and the attachment tree, then derives one serial chain
//! per limb, rooted at the end of the limb that faces the assembly root.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Full-load joint speed of the limb actuators, 5.4 rpm.
pub const JOINT_V_MAX: f64 = 5.4 * 2.0 * PI / 60.0;

/// Link lengths of the canonical limb, base to tip. They sum to 1.55 m.
pub const CANONICAL_LINKS: [f64; 7] = [0.10, 0.25, 0.30, 0.30, 0.30, 0.20, 0.10];

/// Motors carried by a limb: seven joints plus one gripper at each end.
pub const LIMB_MOTORS: u32 = 9;
/// Drive motors of a wheel module.
pub const WHEEL_MOTORS: u32 = 2;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("no modules")]
    NoModules,
    #[error("duplicate module id `{0}`")]
    DuplicateModule(String),
    #[error("module `{module}`: {reason}")]
    InvalidModule { module: String, reason: String },
    #[error("joint `{module}/{joint}`: {reason}")]
    InvalidJoint {
        module: String,
        joint: String,
        reason: String,
    },
    #[error("dangling attachment endpoint `{0}`")]
    DanglingAttachment(String),
    #[error("attachment {0:?} must pair one gripper with one grapple fixture")]
    BadAttachment([String; 2]),
    #[error("`{0}` is used by more than one attachment")]
    EndpointReused(String),
    #[error("cyclic assembly: attachment {0:?} closes a loop")]
    CyclicAssembly([String; 2]),
    #[error("assembly is not connected: `{0}` is unreachable from the root")]
    Disconnected(String),
    #[error("unknown node id `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` runs level {level} but has no chain assigned")]
    MissingChain { node: String, level: Level },
    #[error("node `{node}` references unknown limb `{limb}`")]
    UnknownChain { node: String, limb: String },
    #[error("node `{node}`: level {level} takes no chain")]
    ChainNotAllowed { node: String, level: Level },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModuleKind {
    Limb,
    Wheel,
    Body,
    #[serde(rename = "Gripper-tool")]
    GripperTool,
}

impl ModuleKind {
    pub fn motor_count(self) -> u32 {
        match self {
            ModuleKind::Limb => LIMB_MOTORS,
            ModuleKind::Wheel => WHEEL_MOTORS,
            ModuleKind::Body => 0,
            ModuleKind::GripperTool => 1,
        }
    }

    /// Names of the grippers a module of this kind carries.
    pub fn grippers(self) -> &'static [&'static str] {
        match self {
            ModuleKind::Limb => &["gripper1", "gripper2"],
            ModuleKind::GripperTool => &["gripper1"],
            ModuleKind::Wheel | ModuleKind::Body => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub axis: [f64; 3],
    pub kind: JointKind,
    pub limits: [f64; 2],
    pub v_max: f64,
    pub link_length: f64,
}

impl JointSpec {
    pub fn revolute(name: &str, axis: [f64; 3], limits: [f64; 2], link_length: f64) -> Self {
        Self {
            name: name.to_string(),
            axis,
            kind: JointKind::Revolute,
            limits,
            v_max: JOINT_V_MAX,
            link_length,
        }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.limits[0], self.limits[1])
    }

    pub fn within_limits(&self, value: f64) -> bool {
        value >= self.limits[0] && value <= self.limits[1]
    }

    fn validate(&self, module: &str) -> Result<(), ModelError> {
        let fail = |reason: &str| ModelError::InvalidJoint {
            module: module.to_string(),
            joint: self.name.clone(),
            reason: reason.to_string(),
        };
        let norm = self.axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(fail("axis must be a unit vector"));
        }
        if !(self.limits[0] < self.limits[1]) {
            return Err(fail("limits must satisfy lo < hi"));
        }
        if !(self.v_max > 0.0) {
            return Err(fail("v_max must be positive"));
        }
        if !(self.link_length >= 0.0) {
            return Err(fail("link_length must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleSpec {
    pub id: String,
    pub kind: ModuleKind,
    #[serde(default)]
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub fixtures: Vec<String>,
    /// Which gripper end of a limb serves as its base when the limb itself
    /// is the assembly root. Limbs are symmetric, so either end works.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
}

impl ModuleSpec {
    pub fn motor_count(&self) -> u32 {
        self.kind.motor_count()
    }

    pub fn has_gripper(&self, name: &str) -> bool {
        self.kind.grippers().contains(&name)
    }

    pub fn has_fixture(&self, name: &str) -> bool {
        self.fixtures.iter().any(|f| f == name)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| ModelError::InvalidModule {
            module: self.id.clone(),
            reason,
        };
        if self.id.is_empty() || self.id.contains('/') || self.id.contains('.') {
            return Err(fail("id must be non-empty and free of `/` and `.`".into()));
        }
        let mut seen = BTreeSet::new();
        for fixture in &self.fixtures {
            if !seen.insert(fixture) {
                return Err(fail(format!("duplicate fixture id `{fixture}`")));
            }
        }
        let mut names = BTreeSet::new();
        for joint in &self.joints {
            if !names.insert(&joint.name) {
                return Err(fail(format!("duplicate joint name `{}`", joint.name)));
            }
            if self.has_gripper(&joint.name) {
                return Err(fail(format!("joint name `{}` collides with a gripper", joint.name)));
            }
            joint.validate(&self.id)?;
        }
        match self.kind {
            ModuleKind::Limb if self.joints.len() != 7 => {
                return Err(fail(format!("a limb has 7 joints, found {}", self.joints.len())))
            }
            ModuleKind::Body if self.fixtures.len() != 4 => {
                return Err(fail(format!("a body has 4 fixtures, found {}", self.fixtures.len())))
            }
            ModuleKind::Body | ModuleKind::Wheel if !self.joints.is_empty() => {
                return Err(fail("only limbs and tools carry kinematic joints".into()))
            }
            _ => {}
        }
        if let Some(base) = &self.base {
            if self.kind != ModuleKind::Limb || !self.has_gripper(base) {
                return Err(fail(format!("`{base}` is not a limb gripper")));
            }
        }
        Ok(())
    }
}

/// Serial chain of joints from a root frame to a tip frame.
///
/// The root frame sits `base_offset` metres behind the first joint along x.
/// Each joint rotates (or slides) about its axis and is followed by a
/// translation of `link_length` along x to the next joint frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub module: String,
    pub root_frame: String,
    pub tip_frame: String,
    pub base_offset: f64,
    pub joints: Vec<JointSpec>,
}

impl KinematicChain {
    pub fn new(module: &str, joints: Vec<JointSpec>) -> Self {
        Self {
            module: module.to_string(),
            root_frame: format!("{module}.base"),
            tip_frame: format!("{module}.tip"),
            base_offset: 0.0,
            joints,
        }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// Upper bound on the distance between root and tip.
    pub fn reach(&self) -> f64 {
        self.base_offset
            + self
                .joints
                .iter()
                .map(|j| {
                    let slide = match j.kind {
                        JointKind::Prismatic => j.limits[0].abs().max(j.limits[1].abs()),
                        JointKind::Revolute => 0.0,
                    };
                    j.link_length + slide
                })
                .sum::<f64>()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    /// The same chain walked from the tip end.
    ///
    /// The reversed frame is turned half a revolution about z, so roll and
    /// pitch axes keep their coordinates while z axes flip.
    pub fn reversed(&self) -> Self {
        let n = self.joints.len();
        let mut joints = Vec::with_capacity(n);
        for i in (0..n).rev() {
            let mut joint = self.joints[i].clone();
            joint.axis[2] = -joint.axis[2];
            joint.link_length = if i == 0 {
                self.base_offset
            } else {
                self.joints[i - 1].link_length
            };
            joints.push(joint);
        }
        Self {
            module: self.module.clone(),
            root_frame: self.tip_frame.clone(),
            tip_frame: self.root_frame.clone(),
            base_offset: self.joints.last().map_or(0.0, |j| j.link_length),
            joints,
        }
    }
}

/// A stack level, or one of the auxiliary roles a computer can host.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "LevelRepr", into = "LevelRepr")]
pub enum Level {
    Joint,
    Ik,
    Limb,
    Mover,
    Operator,
    WheelDirect,
    Calibrator,
    MissionControl,
}

impl Level {
    pub fn number(self) -> Option<u8> {
        match self {
            Level::Joint => Some(1),
            Level::Ik => Some(2),
            Level::Limb => Some(3),
            Level::Mover => Some(4),
            Level::Operator => Some(5),
            _ => None,
        }
    }

    pub fn needs_chain(self) -> bool {
        matches!(self, Level::Joint | Level::Ik | Level::Limb | Level::Calibrator)
    }

    pub fn forbids_chain(self) -> bool {
        matches!(self, Level::Mover | Level::Operator)
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match LevelRepr::from(*self) {
            LevelRepr::Number(n) => write!(f, "{n}"),
            LevelRepr::Name(s) => f.write_str(&s),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LevelRepr {
    Number(u8),
    Name(String),
}

impl TryFrom<LevelRepr> for Level {
    type Error = String;

    fn try_from(repr: LevelRepr) -> Result<Self, String> {
        match repr {
            LevelRepr::Number(1) => Ok(Level::Joint),
            LevelRepr::Number(2) => Ok(Level::Ik),
            LevelRepr::Number(3) => Ok(Level::Limb),
            LevelRepr::Number(4) => Ok(Level::Mover),
            LevelRepr::Number(5) => Ok(Level::Operator),
            LevelRepr::Name(s) if s == "wheel-direct" => Ok(Level::WheelDirect),
            LevelRepr::Name(s) if s == "calibrator" => Ok(Level::Calibrator),
            LevelRepr::Name(s) if s == "mission-control" => Ok(Level::MissionControl),
            LevelRepr::Number(n) => Err(format!("level {n} is outside 1..=5")),
            LevelRepr::Name(s) => Err(format!("unknown role `{s}`")),
        }
    }
}

impl From<Level> for LevelRepr {
    fn from(level: Level) -> Self {
        match level {
            Level::WheelDirect => LevelRepr::Name("wheel-direct".into()),
            Level::Calibrator => LevelRepr::Name("calibrator".into()),
            Level::MissionControl => LevelRepr::Name("mission-control".into()),
            other => LevelRepr::Number(other.number().unwrap_or_default()),
        }
    }
}

/// One row of the role table: what a computer runs and which limb it owns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleEntry {
    pub levels: Vec<Level>,
    /// Limb module whose chain this computer drives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<String>,
    /// Module this computer sits in, when it is not the chain's limb
    /// (wheel drivers, body hubs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub module: Option<String>,
}

impl RoleEntry {
    pub fn new(levels: &[Level], chain: Option<&str>) -> Self {
        Self {
            levels: levels.to_vec(),
            chain: chain.map(str::to_string),
            module: None,
        }
    }

    pub fn with_module(mut self, module: &str) -> Self {
        self.module = Some(module.to_string());
        self
    }
}

/// Node id (the per-computer identity) to role.
pub type RoleTable = BTreeMap<String, RoleEntry>;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRole {
    pub node_id: String,
    pub levels: Vec<Level>,
    pub chain: Option<KinematicChain>,
    pub module: Option<String>,
}

impl NodeRole {
    pub fn runs(&self, level: Level) -> bool {
        self.levels.contains(&level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDescription {
    pub name: String,
    pub modules: Vec<ModuleSpec>,
    #[serde(default)]
    pub attachments: Vec<[String; 2]>,
    #[serde(skip)]
    pub chains: Vec<KinematicChain>,
}

/// Parse and validate a description document.
pub fn parse_description(text: &str) -> Result<RobotDescription, ModelError> {
    let raw: RobotDescription = serde_json::from_str(text).map_err(|e| ModelError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    RobotDescription::build(raw.name, raw.modules, raw.attachments)
}

/// Total motors of an assembly.
pub fn motor_count(desc: &RobotDescription) -> u32 {
    desc.modules.iter().map(ModuleSpec::motor_count).sum()
}

/// Resolve the role of `node_id`, binding its limb chain when one is needed.
pub fn chain_for_node(
    desc: &RobotDescription,
    node_id: &str,
    roles: &RoleTable,
) -> Result<NodeRole, ModelError> {
    let entry = roles
        .get(node_id)
        .ok_or_else(|| ModelError::UnknownNode(node_id.to_string()))?;
    let chain = match &entry.chain {
        Some(limb) => Some(desc.chain(limb).cloned().ok_or_else(|| ModelError::UnknownChain {
            node: node_id.to_string(),
            limb: limb.clone(),
        })?),
        None => None,
    };
    for &level in &entry.levels {
        if level.needs_chain() && chain.is_none() {
            return Err(ModelError::MissingChain {
                node: node_id.to_string(),
                level,
            });
        }
        if level.forbids_chain() && chain.is_some() && !entry.levels.iter().any(|l| l.needs_chain())
        {
            return Err(ModelError::ChainNotAllowed {
                node: node_id.to_string(),
                level,
            });
        }
    }
    let mut levels = entry.levels.clone();
    levels.sort();
    levels.dedup();
    Ok(NodeRole {
        node_id: node_id.to_string(),
        levels,
        chain,
        module: entry.module.clone().or_else(|| entry.chain.clone()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Gripper,
    Fixture,
}

impl RobotDescription {
    /// Validate modules and attachments and derive the chains.
    pub fn build(
        name: String,
        modules: Vec<ModuleSpec>,
        attachments: Vec<[String; 2]>,
    ) -> Result<Self, ModelError> {
        if modules.is_empty() {
            return Err(ModelError::NoModules);
        }
        let mut index = BTreeMap::new();
        for (i, module) in modules.iter().enumerate() {
            module.validate()?;
            if index.insert(module.id.clone(), i).is_some() {
                return Err(ModelError::DuplicateModule(module.id.clone()));
            }
        }

        let mut used = BTreeSet::new();
        let mut parent: Vec<usize> = (0..modules.len()).collect();
        for pair in &attachments {
            let mut parts = Vec::with_capacity(2);
            for end in pair {
                let (module_id, part) = end
                    .split_once('.')
                    .ok_or_else(|| ModelError::DanglingAttachment(end.clone()))?;
                let &mi = index
                    .get(module_id)
                    .ok_or_else(|| ModelError::DanglingAttachment(end.clone()))?;
                let module = &modules[mi];
                let kind = if module.has_gripper(part) {
                    Part::Gripper
                } else if module.has_fixture(part) {
                    Part::Fixture
                } else {
                    return Err(ModelError::DanglingAttachment(end.clone()));
                };
                parts.push((mi, kind));
            }
            if parts[0].1 == parts[1].1 {
                return Err(ModelError::BadAttachment(pair.clone()));
            }
            for end in pair {
                if !used.insert(end.clone()) {
                    return Err(ModelError::EndpointReused(end.clone()));
                }
            }
            let (a, b) = (find(&mut parent, parts[0].0), find(&mut parent, parts[1].0));
            if a == b {
                return Err(ModelError::CyclicAssembly(pair.clone()));
            }
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        if let Some(m) = (0..modules.len()).find(|&m| find(&mut parent, m) != root) {
            return Err(ModelError::Disconnected(modules[m].id.clone()));
        }

        let mut desc = Self {
            name,
            modules,
            attachments,
            chains: Vec::new(),
        };
        desc.chains = desc.derive_chains();
        Ok(desc)
    }

    pub fn module(&self, id: &str) -> Option<&ModuleSpec> {
        self.modules.iter().find(|m| m.id == id)
    }

    pub fn chain(&self, limb: &str) -> Option<&KinematicChain> {
        self.chains.iter().find(|c| c.module == limb)
    }

    /// The module every chain is oriented away from: the smallest body id,
    /// otherwise the smallest limb id, otherwise the smallest module id.
    pub fn root_module(&self) -> &ModuleSpec {
        let smallest = |kind: Option<ModuleKind>| {
            self.modules
                .iter()
                .filter(|m| kind.is_none_or(|k| m.kind == k))
                .min_by(|a, b| a.id.cmp(&b.id))
        };
        smallest(Some(ModuleKind::Body))
            .or_else(|| smallest(Some(ModuleKind::Limb)))
            .or_else(|| smallest(None))
            .expect("validated description has modules")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("description serializes")
    }

    /// Gripper-end to module adjacency of the attachment tree.
    fn neighbours(&self) -> BTreeMap<&str, Vec<(&str, &str)>> {
        let mut adj: BTreeMap<&str, Vec<(&str, &str)>> = BTreeMap::new();
        for [a, b] in &self.attachments {
            let (ma, pa) = a.split_once('.').expect("validated");
            let (mb, pb) = b.split_once('.').expect("validated");
            adj.entry(ma).or_default().push((pa, mb));
            adj.entry(mb).or_default().push((pb, ma));
        }
        adj
    }

    fn derive_chains(&self) -> Vec<KinematicChain> {
        let adj = self.neighbours();
        let root = self.root_module().id.as_str();
        // Breadth-first from the root: the part through which each module
        // was reached is the end facing the root.
        let mut entry_part: BTreeMap<&str, Option<&str>> = BTreeMap::new();
        entry_part.insert(root, None);
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(m) = queue.pop_front() {
            for &(_, other) in adj.get(m).map(Vec::as_slice).unwrap_or_default() {
                if entry_part.contains_key(other) {
                    continue;
                }
                let via = adj[other]
                    .iter()
                    .find(|(_, n)| *n == m)
                    .map(|(part, _)| *part);
                entry_part.insert(other, via);
                queue.push_back(other);
            }
        }

        let mut limbs: Vec<&ModuleSpec> = self
            .modules
            .iter()
            .filter(|m| m.kind == ModuleKind::Limb)
            .collect();
        limbs.sort_by(|a, b| a.id.cmp(&b.id));
        limbs
            .into_iter()
            .map(|limb| {
                let base = match entry_part.get(limb.id.as_str()).copied().flatten() {
                    Some(part) => part.to_string(),
                    None => limb.base.clone().unwrap_or_else(|| {
                        // Root limb: stand on an attached gripper if any.
                        adj.get(limb.id.as_str())
                            .and_then(|v| v.iter().map(|(p, _)| *p).min())
                            .unwrap_or("gripper1")
                            .to_string()
                    }),
                };
                let mut chain = KinematicChain::new(&limb.id, limb.joints.clone());
                chain.root_frame = format!("{}.gripper1", limb.id);
                chain.tip_frame = format!("{}.gripper2", limb.id);
                if base == "gripper2" {
                    chain = chain.reversed();
                }
                chain
            })
            .collect()
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Ready-made modules and assemblies used by scenarios and examples.
pub mod presets {
    use super::*;

    /// The 7-DOF limb: alternating roll (x) and pitch (y) joints.
    pub fn limb(id: &str) -> ModuleSpec {
        const ROLL: [f64; 3] = [1.0, 0.0, 0.0];
        const PITCH: [f64; 3] = [0.0, 1.0, 0.0];
        let joints = CANONICAL_LINKS
            .iter()
            .enumerate()
            .map(|(i, &len)| {
                let (axis, limits) = if i % 2 == 0 {
                    (ROLL, [-PI, PI])
                } else {
                    (PITCH, [-2.0, 2.0])
                };
                JointSpec::revolute(&format!("j{}", i + 1), axis, limits, len)
            })
            .collect();
        ModuleSpec {
            id: id.to_string(),
            kind: ModuleKind::Limb,
            joints,
            fixtures: Vec::new(),
            base: None,
        }
    }

    pub fn wheel(id: &str) -> ModuleSpec {
        ModuleSpec {
            id: id.to_string(),
            kind: ModuleKind::Wheel,
            joints: Vec::new(),
            fixtures: vec!["fixture1".into(), "fixture2".into()],
            base: None,
        }
    }

    pub fn body(id: &str) -> ModuleSpec {
        ModuleSpec {
            id: id.to_string(),
            kind: ModuleKind::Body,
            joints: Vec::new(),
            fixtures: (1..=4).map(|i| format!("fixture{i}")).collect(),
            base: None,
        }
    }

    pub fn pair(a: &str, b: &str) -> [String; 2] {
        [a.to_string(), b.to_string()]
    }

    /// The limb stands on the wheel's first fixture.
    pub fn minimal() -> RobotDescription {
        RobotDescription::build(
            "minimal".into(),
            vec![limb("limb1"), wheel("wheel1")],
            vec![pair("limb1.gripper1", "wheel1.fixture1")],
        )
        .expect("preset is valid")
    }

    pub fn vehicle() -> RobotDescription {
        RobotDescription::build(
            "vehicle".into(),
            vec![limb("limb1"), wheel("wheel1"), wheel("wheel2")],
            vec![
                pair("limb1.gripper1", "wheel1.fixture1"),
                pair("limb1.gripper2", "wheel2.fixture1"),
            ],
        )
        .expect("preset is valid")
    }

    /// Two minimals in series: the first limb also grips the second wheel.
    pub fn dragon() -> RobotDescription {
        RobotDescription::build(
            "dragon".into(),
            vec![limb("limb1"), limb("limb2"), wheel("wheel1"), wheel("wheel2")],
            vec![
                pair("limb1.gripper1", "wheel1.fixture1"),
                pair("limb1.gripper2", "wheel2.fixture2"),
                pair("limb2.gripper1", "wheel2.fixture1"),
            ],
        )
        .expect("preset is valid")
    }

    /// Three minimals hung on the side fixtures of a body.
    pub fn tricycle() -> RobotDescription {
        let mut modules = vec![body("body")];
        let mut attachments = Vec::new();
        for i in 1..=3 {
            modules.push(limb(&format!("limb{i}")));
            modules.push(wheel(&format!("wheel{i}")));
            attachments.push(pair(&format!("limb{i}.gripper1"), &format!("body.fixture{i}")));
            attachments.push(pair(&format!("limb{i}.gripper2"), &format!("wheel{i}.fixture1")));
        }
        RobotDescription::build("tricycle".into(), modules, attachments).expect("preset is valid")
    }
}
