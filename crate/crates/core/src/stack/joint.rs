//! Level 1: the joint node on each limb computer. Owns the motors of one
//! module, publishes their sensors and forwards the newest command per joint.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{decode, topic, CalibMsg, CalibPhase, EventKind, JointCommand, Outbox, SensorMsg, StackParams};
use crate::bus::Envelope;
use crate::ctrl::CommandOut;
use crate::model::{KinematicChain, RobotDescription};
use crate::plant::{joint_key, SensorReading};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTelemetry {
    pub name: String,
    pub angle: f64,
    pub target: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct JointNode {
    pub node_id: String,
    pub chain: KinematicChain,
    limits: BTreeMap<String, [f64; 2]>,
    grippers: BTreeSet<String>,
    timeout: Option<f64>,
    /// Newest command per joint not yet written to the motor.
    pending: BTreeMap<String, CommandOut>,
    last_receive: BTreeMap<String, f64>,
    held: BTreeSet<String>,
    last_sensor: BTreeMap<String, f64>,
    targets: BTreeMap<String, CommandOut>,
    calibrated: BTreeMap<String, f64>,
    max_pending: usize,
}

impl JointNode {
    pub fn new(node_id: &str, chain: KinematicChain, desc: &RobotDescription, params: StackParams) -> Self {
        let grippers = desc
            .module(&chain.module)
            .map(|m| m.kind.grippers().iter().map(|g| g.to_string()).collect())
            .unwrap_or_default();
        Self {
            node_id: node_id.to_string(),
            limits: chain.joints.iter().map(|j| (j.name.clone(), j.limits)).collect(),
            chain,
            grippers,
            timeout: params.timeout,
            pending: BTreeMap::new(),
            last_receive: BTreeMap::new(),
            held: BTreeSet::new(),
            last_sensor: BTreeMap::new(),
            targets: BTreeMap::new(),
            calibrated: BTreeMap::new(),
            max_pending: 0,
        }
    }

    pub fn subscriptions(&self) -> Vec<String> {
        vec![
            format!("cmd/{}/", self.chain.module),
            format!("calib/{}/", self.chain.module),
        ]
    }

    pub fn module(&self) -> &str {
        &self.chain.module
    }

    /// Largest number of future targets ever queued for a single joint.
    pub fn max_pending(&self) -> usize {
        self.max_pending
    }

    pub fn calibrated(&self) -> &BTreeMap<String, f64> {
        &self.calibrated
    }

    pub fn last_receive(&self, joint: &str) -> Option<f64> {
        self.last_receive.get(joint).copied()
    }

    pub fn on_message(&mut self, env: &Envelope, now: f64, out: &mut Outbox) {
        if let Some((module, joint)) = topic::split(&env.topic, "cmd") {
            if module != self.chain.module {
                return;
            }
            let Some(msg) = decode::<JointCommand>(&env.payload) else {
                return;
            };
            let command = match (self.limits.get(joint), msg.command) {
                (Some(&[lo, hi]), CommandOut::Position(p)) => CommandOut::Position(p.clamp(lo, hi)),
                (Some(_), c) => c,
                (None, c) if self.grippers.contains(joint) => c,
                (None, _) => {
                    out.event(now, &self.node_id, EventKind::UnknownJoint, env.topic.clone());
                    return;
                }
            };
            self.pending.insert(joint.to_string(), command);
            self.max_pending = self.max_pending.max(1);
            self.last_receive.insert(joint.to_string(), now);
        } else if let Some((module, joint)) = topic::split(&env.topic, "calib") {
            if module != self.chain.module {
                return;
            }
            if let Some(CalibMsg::Status {
                phase: CalibPhase::Done,
                offset: Some(offset),
            }) = decode(&env.payload)
            {
                self.calibrated.insert(joint.to_string(), offset);
            }
        }
    }

    /// Read the local hardware and publish it.
    pub fn sense(&mut self, readings: &[SensorReading], now: f64, out: &mut Outbox) {
        let prefix = format!("{}/", self.chain.module);
        for r in readings {
            let Some(joint) = r.joint.strip_prefix(&prefix) else {
                continue;
            };
            self.last_sensor.insert(joint.to_string(), r.angle);
            out.publish(
                topic::sensor(&self.chain.module, joint),
                &SensorMsg {
                    t: now,
                    angle: r.angle,
                    reflector: r.reflector,
                },
            );
        }
    }

    /// Write pending commands to the motors, or hold joints that went silent.
    pub fn actuate(&mut self, now: f64, out: &mut Outbox) {
        for (joint, command) in std::mem::take(&mut self.pending) {
            out.plant.push((joint_key(&self.chain.module, &joint), command));
            self.targets.insert(joint.clone(), command);
            self.held.remove(&joint);
        }
        let Some(timeout) = self.timeout else { return };
        for (joint, &t) in &self.last_receive {
            if now - t <= timeout || self.held.contains(joint) {
                continue;
            }
            let Some(&y) = self.last_sensor.get(joint) else { continue };
            let hold = CommandOut::Position(y);
            out.plant.push((joint_key(&self.chain.module, joint), hold));
            self.targets.insert(joint.clone(), hold);
            self.held.insert(joint.clone());
            out.event(now, &self.node_id, EventKind::WatchdogHold, joint.clone());
        }
    }

    pub fn telemetry(&self) -> Vec<JointTelemetry> {
        self.chain
            .joints
            .iter()
            .map(|j| JointTelemetry {
                name: joint_key(&self.chain.module, &j.name),
                angle: self.last_sensor.get(&j.name).copied().unwrap_or(0.0),
                target: match self.targets.get(&j.name) {
                    Some(CommandOut::Position(p)) => Some(*p),
                    _ => None,
                },
            })
            .collect()
    }
}
