//! The five control levels, the calibrator and the wheel driver as bus nodes.
//!
//! Every node is a plain state machine: it consumes delivered envelopes via
//! [`LevelNode::on_message`] and produces publications, plant commands and
//! events into an [`Outbox`] on [`LevelNode::tick`]. The owner (the simulated
//! world or the live server) moves envelopes between nodes over the bus.

pub mod calib;
pub mod ik;
pub mod joint;
pub mod limb;
pub mod mover;
pub mod operator;
pub mod wheel;

use std::collections::{BTreeMap, BTreeSet};

use bytes::Bytes;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bus::Envelope;
use crate::ctrl::{CommandOut, StrategyKind, StrategyParams};
use crate::kin::{JointVector, Pose};
use crate::model::{chain_for_node, Level, ModelError, RobotDescription, RoleTable};

pub use calib::{CalibPhase, CalibratorNode};
pub use ik::IkNode;
pub use joint::{JointNode, JointTelemetry};
pub use limb::{LimbNode, LimbTrajectory};
pub use mover::{mover_sync, MoverNode, MoverPlan};
pub use operator::{OperatorNode, ScriptEvent, ScriptOp};
pub use wheel::WheelNode;

pub const DEFAULT_TICK: f64 = 0.02;
pub const DEFAULT_SILENCE_TIMEOUT: f64 = 0.3;

/// Topic naming contract.
pub mod topic {
    pub const MOVER_PLAN: &str = "mover/plan";

    pub fn cmd(module: &str, joint: &str) -> String {
        format!("cmd/{module}/{joint}")
    }

    pub fn sensor(module: &str, joint: &str) -> String {
        format!("sensor/{module}/{joint}")
    }

    pub fn wheel_speed(module: &str) -> String {
        format!("wheel/{module}/speed")
    }

    pub fn traj(limb: &str) -> String {
        format!("traj/{limb}")
    }

    pub fn telemetry(node: &str) -> String {
        format!("telemetry/{node}")
    }

    pub fn calib(module: &str, joint: &str) -> String {
        format!("calib/{module}/{joint}")
    }

    /// `prefix/<module>/<joint>` → `(module, joint)`.
    pub fn split<'a>(topic: &'a str, prefix: &str) -> Option<(&'a str, &'a str)> {
        topic
            .strip_prefix(prefix)?
            .strip_prefix('/')?
            .split_once('/')
            .filter(|(_, j)| !j.contains('/'))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointCommand {
    pub command: CommandOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMsg {
    pub t: f64,
    pub angle: f64,
    pub reflector: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelSpeed {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub q: JointVector,
    /// Seconds after the trajectory is received.
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LimbMsg {
    Waypoints { waypoints: Vec<Waypoint> },
    PoseTarget { pose: Pose },
    /// World-frame displacement of the tip for this tick.
    PoseNudge { twist: [f64; 6] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoverRequest {
    pub targets: BTreeMap<String, JointVector>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CalibMsg {
    Request { homing_speed: f64 },
    Status { phase: CalibPhase, offset: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    UnknownJoint,
    WatchdogHold,
    IkUnreachable,
    IkReached,
    TrajectoryRejected,
    TrajectoryDone,
    PlanIssued,
    PlanRejected,
    TargetRejected,
    CalibrationDone,
    ReflectorNotFound,
    Attached,
    Released,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackEvent {
    pub t: f64,
    pub node: String,
    pub kind: EventKind,
    pub detail: String,
}

/// One remote-strategy output, as seen by the operator node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandSample {
    pub t: f64,
    pub node: String,
    pub joint: String,
    pub u: f64,
    pub y: f64,
    pub r_dot: f64,
}

/// Everything a node produced during one call.
#[derive(Debug, Default)]
pub struct Outbox {
    pub messages: Vec<(String, Bytes)>,
    pub events: Vec<StackEvent>,
    pub trace: Vec<CommandSample>,
    /// Hardware writes: joint or gripper key and setpoint.
    pub plant: Vec<(String, CommandOut)>,
    /// Hardware writes: wheel module, left and right speed.
    pub wheels: Vec<(String, f64, f64)>,
}

impl Outbox {
    pub fn publish<T: Serialize>(&mut self, topic: String, msg: &T) {
        self.messages.push((topic, encode(msg)));
    }

    pub fn event(&mut self, t: f64, node: &str, kind: EventKind, detail: impl Into<String>) {
        self.events.push(StackEvent {
            t,
            node: node.to_string(),
            kind,
            detail: detail.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
            && self.events.is_empty()
            && self.trace.is_empty()
            && self.plant.is_empty()
            && self.wheels.is_empty()
    }
}

pub fn encode<T: Serialize>(msg: &T) -> Bytes {
    Bytes::from(serde_json::to_vec(msg).expect("message types serialize"))
}

pub fn decode<T: DeserializeOwned>(payload: &[u8]) -> Option<T> {
    serde_json::from_slice(payload).ok()
}

/// Tunables shared by every node of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StackParams {
    #[serde(default = "default_delta_e")]
    pub delta_e: f64,
    #[serde(default = "default_delta_offset")]
    pub delta_offset: f64,
    /// Level-1 silence watchdog; `null` disables it.
    #[serde(default = "default_timeout")]
    pub timeout: Option<f64>,
    #[serde(default = "default_tick")]
    pub tick: f64,
}

fn default_delta_e() -> f64 {
    StrategyParams::default().delta_e
}
fn default_delta_offset() -> f64 {
    StrategyParams::default().delta_offset
}
fn default_timeout() -> Option<f64> {
    Some(DEFAULT_SILENCE_TIMEOUT)
}
fn default_tick() -> f64 {
    DEFAULT_TICK
}

impl Default for StackParams {
    fn default() -> Self {
        Self {
            delta_e: default_delta_e(),
            delta_offset: default_delta_offset(),
            timeout: default_timeout(),
            tick: DEFAULT_TICK,
        }
    }
}

impl StackParams {
    pub fn strategy(&self) -> StrategyParams {
        StrategyParams {
            delta_e: self.delta_e,
            delta_offset: self.delta_offset,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum StackError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("node {0} already launched")]
    DuplicateLaunch(String),
    #[error("node {node}: level {level:?} needs a module")]
    MissingModule { node: String, level: Level },
}

/// One node's 1 Hz health report on `telemetry/<node_id>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeTelemetry {
    pub t: f64,
    pub node: String,
    pub ping_ok: bool,
    pub link_quality: f64,
    pub cpu_load: f64,
    pub battery: Option<f64>,
    pub address: String,
    pub joints: Vec<JointTelemetry>,
    pub neighbours: Vec<String>,
    pub events: Vec<StackEvent>,
}

#[derive(Debug, Clone)]
pub struct MissionNode {
    pub node_id: String,
    pub frames: Vec<NodeTelemetry>,
}

impl MissionNode {
    fn on_message(&mut self, env: &Envelope) {
        if env.topic.starts_with("telemetry/") {
            if let Some(frame) = decode(&env.payload) {
                self.frames.push(frame);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum LevelNode {
    Joint(JointNode),
    Ik(IkNode),
    Limb(LimbNode),
    Mover(MoverNode),
    Operator(OperatorNode),
    WheelDirect(WheelNode),
    Calibrator(CalibratorNode),
    MissionControl(MissionNode),
}

impl LevelNode {
    pub fn level(&self) -> Level {
        match self {
            LevelNode::Joint(_) => Level::Joint,
            LevelNode::Ik(_) => Level::Ik,
            LevelNode::Limb(_) => Level::Limb,
            LevelNode::Mover(_) => Level::Mover,
            LevelNode::Operator(_) => Level::Operator,
            LevelNode::WheelDirect(_) => Level::WheelDirect,
            LevelNode::Calibrator(_) => Level::Calibrator,
            LevelNode::MissionControl(_) => Level::MissionControl,
        }
    }

    pub fn subscriptions(&self) -> Vec<String> {
        match self {
            LevelNode::Joint(n) => n.subscriptions(),
            LevelNode::Ik(n) => vec![topic::traj(&n.chain.module), format!("sensor/{}/", n.chain.module)],
            LevelNode::Limb(n) => vec![topic::traj(&n.chain.module), format!("sensor/{}/", n.chain.module)],
            LevelNode::Mover(_) => vec![topic::MOVER_PLAN.to_string(), "sensor/".to_string()],
            LevelNode::Operator(_) => vec!["sensor/".to_string()],
            LevelNode::WheelDirect(n) => vec![topic::wheel_speed(&n.module)],
            LevelNode::Calibrator(n) => vec![
                format!("calib/{}/", n.chain.module),
                format!("sensor/{}/", n.chain.module),
            ],
            LevelNode::MissionControl(_) => vec!["telemetry/".to_string()],
        }
    }

    /// Hand over one envelope. The caller filters by [`Self::subscriptions`].
    pub fn on_message(&mut self, env: &Envelope, now: f64, out: &mut Outbox) {
        match self {
            LevelNode::Joint(n) => n.on_message(env, now, out),
            LevelNode::Ik(n) => n.on_message(env, now, out),
            LevelNode::Limb(n) => n.on_message(env, now, out),
            LevelNode::Mover(n) => n.on_message(env, now, out),
            LevelNode::Operator(n) => n.on_message(env),
            LevelNode::WheelDirect(n) => n.on_message(env),
            LevelNode::Calibrator(n) => n.on_message(env, now, out),
            LevelNode::MissionControl(n) => n.on_message(env),
        }
    }

    /// Periodic work. Level 1 is driven separately through [`JointNode::sense`]
    /// and [`JointNode::actuate`] because it owns the hardware.
    pub fn tick(&mut self, now: f64, out: &mut Outbox) {
        match self {
            LevelNode::Ik(n) => n.tick(now, out),
            LevelNode::Limb(n) => n.tick(now, out),
            LevelNode::Operator(n) => n.tick(now, out),
            LevelNode::WheelDirect(n) => n.tick(out),
            LevelNode::Calibrator(n) => n.tick(now, out),
            LevelNode::Joint(_) | LevelNode::Mover(_) | LevelNode::MissionControl(_) => {}
        }
    }
}

/// Instantiates the levels assigned to each node id, at most once per id.
#[derive(Debug, Default)]
pub struct Launcher {
    launched: BTreeSet<String>,
}

impl Launcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn launched(&self) -> impl Iterator<Item = &str> {
        self.launched.iter().map(String::as_str)
    }

    pub fn launch(
        &mut self,
        node_id: &str,
        desc: &RobotDescription,
        roles: &RoleTable,
        params: StackParams,
        strategy: StrategyKind,
    ) -> Result<Vec<LevelNode>, StackError> {
        let nodes = instantiate(node_id, desc, roles, params, strategy)?;
        if !self.launched.insert(node_id.to_string()) {
            return Err(StackError::DuplicateLaunch(node_id.to_string()));
        }
        Ok(nodes)
    }
}

/// The level set of `node_id`, in ascending level order. Pure.
pub fn instantiate(
    node_id: &str,
    desc: &RobotDescription,
    roles: &RoleTable,
    params: StackParams,
    strategy: StrategyKind,
) -> Result<Vec<LevelNode>, StackError> {
    let role = chain_for_node(desc, node_id, roles)?;
    let mut nodes = Vec::with_capacity(role.levels.len());
    for &level in &role.levels {
        let chain = || role.chain.clone().expect("validated by chain_for_node");
        nodes.push(match level {
            Level::Joint => LevelNode::Joint(JointNode::new(node_id, chain(), desc, params)),
            Level::Ik => LevelNode::Ik(IkNode::new(node_id, chain(), params)),
            Level::Limb => LevelNode::Limb(LimbNode::new(node_id, chain(), params)),
            Level::Mover => LevelNode::Mover(MoverNode::new(node_id, desc, params)),
            Level::Operator => {
                LevelNode::Operator(OperatorNode::new(node_id, desc, params, strategy))
            }
            Level::WheelDirect => {
                let module = role.module.clone().ok_or_else(|| StackError::MissingModule {
                    node: node_id.to_string(),
                    level,
                })?;
                LevelNode::WheelDirect(WheelNode::new(&module))
            }
            Level::Calibrator => {
                LevelNode::Calibrator(CalibratorNode::new(node_id, chain(), params))
            }
            Level::MissionControl => LevelNode::MissionControl(MissionNode {
                node_id: node_id.to_string(),
                frames: Vec::new(),
            }),
        });
    }
    Ok(nodes)
}
