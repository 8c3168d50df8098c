//! Level 2: inverse kinematics for one limb.

use std::collections::BTreeMap;

use super::{decode, topic, EventKind, JointCommand, LimbMsg, Outbox, SensorMsg, StackParams};
use crate::bus::Envelope;
use crate::ctrl::CommandOut;
use crate::kin::{dls_step, forward_kinematics, inverse_kinematics, IkMask, IkOptions, JointVector, KinError, Pose};
use crate::model::KinematicChain;

/// Joint step moving the tip by `twist` from `q`, limited to the joint range.
pub fn ik_nudge(chain: &KinematicChain, q: &[f64], twist: &[f64; 6], damping: f64) -> Result<JointVector, KinError> {
    if twist.iter().all(|v| *v == 0.0) {
        return Ok(JointVector(q.to_vec()));
    }
    let target = forward_kinematics(chain, q)?.nudged(twist);
    let dq = dls_step(chain, q, &target, damping, IkMask::Full)?;
    Ok(JointVector(
        q.iter()
            .zip(dq.iter())
            .zip(&chain.joints)
            .map(|((q, d), j)| j.clamp(q + d))
            .collect(),
    ))
}

#[derive(Debug, Clone)]
pub struct IkNode {
    pub node_id: String,
    pub chain: KinematicChain,
    delta_e: f64,
    sensed: BTreeMap<String, f64>,
    goal: Option<JointVector>,
    target_pending: Option<Pose>,
    nudge: Option<[f64; 6]>,
    pub options: IkOptions,
}

impl IkNode {
    pub fn new(node_id: &str, chain: KinematicChain, params: StackParams) -> Self {
        Self {
            node_id: node_id.to_string(),
            chain,
            delta_e: params.delta_e,
            sensed: BTreeMap::new(),
            goal: None,
            target_pending: None,
            nudge: None,
            options: IkOptions::default(),
        }
    }

    pub fn goal(&self) -> Option<&JointVector> {
        self.goal.as_ref()
    }

    fn sensed_q(&self) -> Option<Vec<f64>> {
        self.chain
            .joints
            .iter()
            .map(|j| self.sensed.get(&j.name).copied())
            .collect()
    }

    pub fn on_message(&mut self, env: &Envelope, _now: f64, _out: &mut Outbox) {
        if let Some((_, joint)) = topic::split(&env.topic, "sensor") {
            if let Some(msg) = decode::<SensorMsg>(&env.payload) {
                self.sensed.insert(joint.to_string(), msg.angle);
            }
            return;
        }
        match decode::<LimbMsg>(&env.payload) {
            Some(LimbMsg::PoseTarget { pose }) => {
                self.target_pending = Some(pose);
                self.nudge = None;
            }
            Some(LimbMsg::PoseNudge { twist }) => {
                self.nudge = Some(twist);
                self.goal = None;
                self.target_pending = None;
            }
            Some(LimbMsg::Waypoints { .. }) => {
                self.goal = None;
                self.target_pending = None;
                self.nudge = None;
            }
            None => {}
        }
    }

    fn emit(&self, q: &[f64], y: &[f64], out: &mut Outbox) {
        for ((joint, &q), &y) in self.chain.joints.iter().zip(q).zip(y) {
            let u = q.clamp(y - self.delta_e, y + self.delta_e);
            out.publish(
                topic::cmd(&self.chain.module, &joint.name),
                &JointCommand {
                    command: CommandOut::Position(u),
                },
            );
        }
    }

    pub fn tick(&mut self, now: f64, out: &mut Outbox) {
        let Some(y) = self.sensed_q() else { return };
        if let Some(pose) = self.target_pending.take() {
            match inverse_kinematics(&self.chain, &pose, &y, &self.options) {
                Ok(sol) => self.goal = Some(sol.q),
                Err(e) => {
                    self.goal = None;
                    out.event(now, &self.node_id, EventKind::IkUnreachable, e.to_string());
                    self.emit(&y, &y, out);
                    return;
                }
            }
        }
        if let Some(twist) = self.nudge.take() {
            match ik_nudge(&self.chain, &y, &twist, self.options.damping) {
                Ok(q) => self.emit(&q, &y, out),
                Err(e) => {
                    out.event(now, &self.node_id, EventKind::IkUnreachable, e.to_string());
                    self.emit(&y, &y, out);
                }
            }
            return;
        }
        if let Some(goal) = &self.goal {
            self.emit(goal, &y, out);
            let gap = goal.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap <= self.options.pos_tol {
                out.event(now, &self.node_id, EventKind::IkReached, self.chain.module.clone());
                self.goal = None;
            }
        }
    }
}
