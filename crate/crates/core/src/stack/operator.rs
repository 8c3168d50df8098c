//! Level 5: operator input. Held buttons become velocity requests that the
//! configured remote strategy turns into joint commands.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    decode, topic, CalibMsg, CommandSample, EventKind, JointCommand, LimbMsg, MoverRequest, Outbox, SensorMsg,
    StackParams, Waypoint, WheelSpeed,
};
use crate::bus::Envelope;
use crate::ctrl::{CommandOut, StrategyInput, StrategyKind, StrategyParams, StrategyState};
use crate::kin::{JointVector, Pose};
use crate::model::{ModuleKind, RobotDescription};
use crate::plant::joint_key;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptOp {
    Down,
    Up,
    Grip,
    Pose,
    Trajectory,
    Plan,
    Calibrate,
}

/// A timed operator action. `speed` is the held rate for `down`, the sign of
/// the jaw motion for `grip` and the homing rate for `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub t: f64,
    pub operator: String,
    pub op: ScriptOp,
    pub target: String,
    #[serde(default)]
    pub speed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<Waypoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<BTreeMap<String, JointVector>>,
}

impl ScriptEvent {
    pub fn new(t: f64, operator: &str, op: ScriptOp, target: &str, speed: f64) -> Self {
        Self {
            t,
            operator: operator.to_string(),
            op,
            target: target.to_string(),
            speed,
            pose: None,
            waypoints: None,
            targets: None,
        }
    }
}

pub const IK_AXES: [&str; 6] = ["x", "y", "z", "rx", "ry", "rz"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Joint { module: String, joint: String },
    Gripper { module: String, gripper: String },
    Ik { limb: String, axis: usize },
    WheelDrive { module: String },
    WheelTurn { module: String },
    Limb { limb: String },
    Mover,
}

/// Resolve a target string against the description.
pub fn parse_target(desc: &RobotDescription, target: &str) -> Result<Target, String> {
    if target == "mover" {
        return Ok(Target::Mover);
    }
    let parts: Vec<&str> = target.split('/').collect();
    let module = desc
        .module(parts[0])
        .ok_or_else(|| format!("unknown module in target {target}"))?;
    let id = module.id.clone();
    match (module.kind, parts.as_slice()) {
        (ModuleKind::Limb, [_]) => Ok(Target::Limb { limb: id }),
        (ModuleKind::Limb, [_, "ik", axis]) => IK_AXES
            .iter()
            .position(|a| a == axis)
            .map(|axis| Target::Ik { limb: id, axis })
            .ok_or_else(|| format!("unknown axis in target {target}")),
        (_, [_, name]) if module.has_gripper(name) => Ok(Target::Gripper {
            module: id,
            gripper: name.to_string(),
        }),
        (_, [_, name]) if module.joints.iter().any(|j| j.name == *name) => Ok(Target::Joint {
            module: id,
            joint: name.to_string(),
        }),
        (ModuleKind::Wheel, [_, "drive"]) => Ok(Target::WheelDrive { module: id }),
        (ModuleKind::Wheel, [_, "turn"]) => Ok(Target::WheelTurn { module: id }),
        _ => Err(format!("unknown target {target}")),
    }
}

#[derive(Debug, Clone, Default)]
struct JointBinding {
    strategy: Option<StrategyState>,
    held: f64,
    /// Offset strategy: the target latched at press onset.
    latched: Option<f64>,
    onset: bool,
}

#[derive(Debug, Clone)]
pub struct OperatorNode {
    pub node_id: String,
    desc: RobotDescription,
    pub strategy: StrategyKind,
    params: StrategyParams,
    tick: f64,
    sensed: BTreeMap<String, f64>,
    joints: BTreeMap<String, JointBinding>,
    ik: BTreeMap<String, [f64; 6]>,
    wheels: BTreeMap<String, (f64, f64)>,
    grippers: BTreeMap<String, f64>,
    oneshots: Vec<(String, bytes::Bytes)>,
}

impl OperatorNode {
    pub fn new(node_id: &str, desc: &RobotDescription, params: StackParams, strategy: StrategyKind) -> Self {
        Self {
            node_id: node_id.to_string(),
            desc: desc.clone(),
            strategy,
            params: params.strategy(),
            tick: params.tick,
            sensed: BTreeMap::new(),
            joints: BTreeMap::new(),
            ik: BTreeMap::new(),
            wheels: BTreeMap::new(),
            grippers: BTreeMap::new(),
            oneshots: Vec::new(),
        }
    }

    pub fn on_message(&mut self, env: &Envelope) {
        if let Some((module, joint)) = topic::split(&env.topic, "sensor") {
            if let Some(msg) = decode::<SensorMsg>(&env.payload) {
                self.sensed.insert(joint_key(module, joint), msg.angle);
            }
        }
    }

    pub fn sensed(&self, key: &str) -> Option<f64> {
        self.sensed.get(key).copied()
    }

    /// Keys, limbs and wheels currently held down.
    pub fn held_targets(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .joints
            .iter()
            .filter(|(_, b)| b.held != 0.0)
            .map(|(k, _)| k.clone())
            .collect();
        for (limb, rates) in &self.ik {
            for (axis, rate) in IK_AXES.iter().zip(rates) {
                if *rate != 0.0 {
                    out.push(format!("{limb}/ik/{axis}"));
                }
            }
        }
        for (module, (drive, turn)) in &self.wheels {
            if *drive != 0.0 {
                out.push(format!("{module}/drive"));
            }
            if *turn != 0.0 {
                out.push(format!("{module}/turn"));
            }
        }
        out
    }

    /// Apply one input event. Unknown targets are rejected locally.
    pub fn input(&mut self, event: &ScriptEvent, now: f64, out: &mut Outbox) {
        let target = match parse_target(&self.desc, &event.target) {
            Ok(t) => t,
            Err(reason) => {
                out.event(now, &self.node_id, EventKind::TargetRejected, reason);
                return;
            }
        };
        let rate = match event.op {
            ScriptOp::Down => event.speed,
            _ => 0.0,
        };
        match (event.op, target) {
            (ScriptOp::Down | ScriptOp::Up, Target::Joint { module, joint }) => {
                let b = self.joints.entry(joint_key(&module, &joint)).or_default();
                if rate != 0.0 && (b.held == 0.0 || rate.signum() != b.held.signum()) {
                    b.onset = true;
                }
                if rate == 0.0 {
                    b.latched = None;
                    b.onset = false;
                }
                b.held = rate;
            }
            (ScriptOp::Down | ScriptOp::Up, Target::Ik { limb, axis }) => {
                self.ik.entry(limb).or_default()[axis] = rate;
            }
            (ScriptOp::Down | ScriptOp::Up, Target::WheelDrive { module }) => {
                self.wheels.entry(module).or_default().0 = rate;
            }
            (ScriptOp::Down | ScriptOp::Up, Target::WheelTurn { module }) => {
                self.wheels.entry(module).or_default().1 = rate;
            }
            (ScriptOp::Grip, Target::Gripper { module, gripper }) => {
                let opening = if event.speed > 0.0 { crate::plant::GRIPPER_MAX_OPENING } else { 0.0 };
                self.grippers.insert(joint_key(&module, &gripper), opening);
            }
            (ScriptOp::Pose, Target::Limb { limb }) if event.pose.is_some() => {
                let msg = LimbMsg::PoseTarget {
                    pose: event.pose.expect("checked"),
                };
                self.oneshots.push((topic::traj(&limb), super::encode(&msg)));
                self.ik.remove(&limb);
            }
            (ScriptOp::Trajectory, Target::Limb { limb }) => {
                let msg = LimbMsg::Waypoints {
                    waypoints: event.waypoints.clone().unwrap_or_default(),
                };
                self.oneshots.push((topic::traj(&limb), super::encode(&msg)));
                self.ik.remove(&limb);
            }
            (ScriptOp::Plan, Target::Mover) => {
                let msg = MoverRequest {
                    targets: event.targets.clone().unwrap_or_default(),
                };
                self.oneshots.push((topic::MOVER_PLAN.to_string(), super::encode(&msg)));
            }
            (ScriptOp::Calibrate, Target::Joint { module, joint }) => {
                let msg = CalibMsg::Request {
                    homing_speed: event.speed,
                };
                self.oneshots.push((topic::calib(&module, &joint), super::encode(&msg)));
                self.joints.remove(&joint_key(&module, &joint));
            }
            (op, _) => out.event(
                now,
                &self.node_id,
                EventKind::TargetRejected,
                format!("{op:?} not applicable to {}", event.target),
            ),
        }
    }

    pub fn tick(&mut self, now: f64, out: &mut Outbox) {
        out.messages.append(&mut self.oneshots);
        let kind = self.strategy;
        let params = self.params;
        let tick = self.tick;
        for (key, b) in self.joints.iter_mut() {
            let Some(&y) = self.sensed.get(key) else { continue };
            let state = b
                .strategy
                .get_or_insert_with(|| StrategyState::new(kind, params, y, now - tick));
            let (module, joint) = key.split_once('/').expect("joint key");
            let input = StrategyInput { t: now, y, r_dot: b.held };
            let command = if kind == StrategyKind::Offset {
                if b.onset {
                    b.onset = false;
                    b.latched = Some(state.step(&input).expect("offset is infallible").value());
                }
                match b.latched {
                    Some(u) => CommandOut::Position(u),
                    None => continue,
                }
            } else {
                match state.step(&input) {
                    Ok(c) => c,
                    Err(e) => {
                        out.event(now, &self.node_id, EventKind::TargetRejected, e.to_string());
                        continue;
                    }
                }
            };
            out.trace.push(CommandSample {
                t: now,
                node: self.node_id.clone(),
                joint: key.clone(),
                u: command.value(),
                y,
                r_dot: b.held,
            });
            out.publish(topic::cmd(module, joint), &JointCommand { command });
        }
        for (limb, rates) in &self.ik {
            let twist = rates.map(|r| r * self.tick);
            out.publish(topic::traj(limb), &LimbMsg::PoseNudge { twist });
        }
        for (module, (drive, turn)) in &self.wheels {
            out.publish(
                topic::wheel_speed(module),
                &WheelSpeed {
                    left: drive - turn,
                    right: drive + turn,
                },
            );
        }
        for (key, opening) in &self.grippers {
            let (module, gripper) = key.split_once('/').expect("gripper key");
            out.publish(
                topic::cmd(module, gripper),
                &JointCommand {
                    command: CommandOut::Position(*opening),
                },
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::stack::encode;

    fn sensor(angle: f64) -> Envelope {
        Envelope {
            topic: "sensor/limb1/j1".into(),
            payload: encode(&SensorMsg {
                t: 0.0,
                angle,
                reflector: false,
            }),
            src: "limb1-pc".into(),
            dst: "operator-A".into(),
            link_seq: 0,
            send_time: 0.0,
            deliver_time: Some(0.0),
        }
    }

    fn op(kind: StrategyKind) -> OperatorNode {
        let mut n = OperatorNode::new("operator-A", &presets::minimal(), StackParams::default(), kind);
        n.on_message(&sensor(0.0));
        n
    }

    fn commands(out: &Outbox) -> Vec<(String, CommandOut)> {
        out.messages
            .iter()
            .filter_map(|(t, p)| decode::<JointCommand>(p).map(|c| (t.clone(), c.command)))
            .collect()
    }

    #[test]
    fn targets_resolve_against_description() {
        let d = presets::minimal();
        assert_eq!(
            parse_target(&d, "limb1/j3").unwrap(),
            Target::Joint {
                module: "limb1".into(),
                joint: "j3".into()
            }
        );
        assert_eq!(parse_target(&d, "limb1/ik/rz").unwrap(), Target::Ik { limb: "limb1".into(), axis: 5 });
        assert!(matches!(parse_target(&d, "wheel1/drive"), Ok(Target::WheelDrive { .. })));
        assert!(matches!(parse_target(&d, "limb1/gripper2"), Ok(Target::Gripper { .. })));
        assert!(parse_target(&d, "limb9/j1").is_err());
        assert!(parse_target(&d, "limb1/j8").is_err());
        assert!(parse_target(&d, "wheel1/j1").is_err());
    }

    #[test]
    fn unknown_target_rejected_locally() {
        let mut n = op(StrategyKind::ClampedIntegral);
        let mut out = Outbox::default();
        n.input(&ScriptEvent::new(0.0, "operator-A", ScriptOp::Down, "limb7/j1", 0.1), 0.0, &mut out);
        assert_eq!(out.events[0].kind, EventKind::TargetRejected);
        n.tick(0.0, &mut out);
        assert!(out.messages.is_empty());
    }

    #[test]
    fn idle_binding_publishes_hold() {
        let mut n = op(StrategyKind::ClampedIntegral);
        let mut out = Outbox::default();
        n.input(&ScriptEvent::new(0.0, "operator-A", ScriptOp::Up, "limb1/j1", 0.0), 0.0, &mut out);
        n.tick(0.0, &mut out);
        n.tick(0.02, &mut out);
        assert_eq!(out.trace.iter().map(|s| s.r_dot).collect::<Vec<_>>(), vec![0.0, 0.0]);
        assert!(commands(&out).iter().all(|(_, c)| *c == CommandOut::Position(0.0)));
    }

    #[test]
    fn release_zeroes_rate_next_tick() {
        let mut n = op(StrategyKind::Speed);
        let mut out = Outbox::default();
        n.input(&ScriptEvent::new(0.0, "operator-A", ScriptOp::Down, "limb1/j1", 0.1), 0.0, &mut out);
        n.tick(0.0, &mut out);
        n.input(&ScriptEvent::new(0.02, "operator-A", ScriptOp::Up, "limb1/j1", 0.0), 0.02, &mut out);
        n.tick(0.02, &mut out);
        let c = commands(&out);
        assert_eq!(c[0].1, CommandOut::Velocity(0.1));
        assert_eq!(c[1].1, CommandOut::Velocity(0.0));
        assert!(n.held_targets().is_empty());
    }

    #[test]
    fn offset_latches_one_target_per_press() {
        let mut n = op(StrategyKind::Offset);
        let mut out = Outbox::default();
        n.input(&ScriptEvent::new(0.0, "operator-A", ScriptOp::Down, "limb1/j1", 0.4), 0.0, &mut out);
        n.tick(0.0, &mut out);
        n.on_message(&sensor(0.1));
        n.tick(0.02, &mut out);
        n.input(&ScriptEvent::new(0.04, "operator-A", ScriptOp::Up, "limb1/j1", 0.0), 0.04, &mut out);
        n.tick(0.04, &mut out);
        let c = commands(&out);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|(_, u)| *u == CommandOut::Position(0.3)));
    }

    #[test]
    fn wheels_bypass_strategies() {
        let mut n = op(StrategyKind::ClampedIntegral);
        let mut out = Outbox::default();
        n.input(&ScriptEvent::new(0.0, "operator-A", ScriptOp::Down, "wheel1/drive", 1.0), 0.0, &mut out);
        n.input(&ScriptEvent::new(0.0, "operator-A", ScriptOp::Down, "wheel1/turn", 0.5), 0.0, &mut out);
        n.tick(0.0, &mut out);
        let (topic, payload) = &out.messages[0];
        assert_eq!(topic, "wheel/wheel1/speed");
        assert_eq!(decode::<WheelSpeed>(payload).unwrap(), WheelSpeed { left: 0.5, right: 1.5 });
    }
}
