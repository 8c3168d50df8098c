//! Reflector homing. The calibrator sends exactly one small target per fresh
//! sensor message, so a lost link starves the joint of targets and it stops.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{decode, topic, CalibMsg, EventKind, JointCommand, Outbox, SensorMsg, StackParams};
use crate::bus::Envelope;
use crate::ctrl::CommandOut;
use crate::model::KinematicChain;

/// Readings in a row without progress before homing gives up.
pub const STALL_LIMIT: u32 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibPhase {
    Seeking,
    Done,
    Halted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationState {
    pub joint: String,
    pub homing_speed: f64,
    pub reflector_last: Option<bool>,
    pub phase: CalibPhase,
    pub max_sweep: f64,
    start: Option<f64>,
    last_y: Option<f64>,
    last_t: f64,
    stalled: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibStep {
    /// Send this position target.
    Target(f64),
    /// Rising edge seen; the zero offset is the sensed angle.
    Done(f64),
    NotFound,
    /// Stale or duplicate reading; nothing to send.
    Wait,
}

impl CalibrationState {
    pub fn new(joint: &str, homing_speed: f64, max_sweep: f64) -> Self {
        Self {
            joint: joint.to_string(),
            homing_speed,
            reflector_last: None,
            phase: CalibPhase::Seeking,
            max_sweep,
            start: None,
            last_y: None,
            last_t: f64::NEG_INFINITY,
            stalled: 0,
        }
    }

    /// Advance on one sensor message.
    pub fn step(&mut self, reading: &SensorMsg, tick: f64) -> CalibStep {
        if self.phase != CalibPhase::Seeking || reading.t <= self.last_t {
            return CalibStep::Wait;
        }
        self.last_t = reading.t;
        let y = reading.angle;
        if reading.reflector {
            self.phase = CalibPhase::Done;
            self.reflector_last = Some(true);
            return CalibStep::Done(y);
        }
        self.reflector_last = Some(false);
        let start = *self.start.get_or_insert(y);
        match self.last_y {
            Some(prev) if (y - prev).abs() < 1e-12 => self.stalled += 1,
            _ => self.stalled = 0,
        }
        self.last_y = Some(y);
        if (y - start).abs() > self.max_sweep || self.stalled >= STALL_LIMIT {
            self.phase = CalibPhase::Halted;
            return CalibStep::NotFound;
        }
        CalibStep::Target(y + self.homing_speed * tick)
    }
}

#[derive(Debug, Clone)]
pub struct CalibratorNode {
    pub node_id: String,
    pub chain: KinematicChain,
    tick: f64,
    pub states: BTreeMap<String, CalibrationState>,
    pub results: BTreeMap<String, f64>,
}

impl CalibratorNode {
    pub fn new(node_id: &str, chain: KinematicChain, params: StackParams) -> Self {
        Self {
            node_id: node_id.to_string(),
            chain,
            tick: params.tick,
            states: BTreeMap::new(),
            results: BTreeMap::new(),
        }
    }

    pub fn on_message(&mut self, env: &Envelope, now: f64, out: &mut Outbox) {
        let module = self.chain.module.clone();
        if let Some((_, joint)) = topic::split(&env.topic, "calib") {
            let Some(spec) = self.chain.joints.iter().find(|j| j.name == joint) else { return };
            if let Some(CalibMsg::Request { homing_speed }) = decode(&env.payload) {
                let sweep = spec.limits[1] - spec.limits[0];
                self.states
                    .insert(joint.to_string(), CalibrationState::new(joint, homing_speed, sweep));
            }
            return;
        }
        let Some((_, joint)) = topic::split(&env.topic, "sensor") else { return };
        let Some(state) = self.states.get_mut(joint) else { return };
        let Some(reading) = decode::<SensorMsg>(&env.payload) else { return };
        let (command, status) = match state.step(&reading, self.tick) {
            CalibStep::Wait => return,
            CalibStep::Target(u) => (u, None),
            CalibStep::Done(offset) => {
                self.results.insert(joint.to_string(), offset);
                out.event(now, &self.node_id, EventKind::CalibrationDone, format!("{module}/{joint} {offset}"));
                (reading.angle, Some((CalibPhase::Done, Some(offset))))
            }
            CalibStep::NotFound => {
                out.event(now, &self.node_id, EventKind::ReflectorNotFound, format!("{module}/{joint}"));
                (reading.angle, Some((CalibPhase::Halted, None)))
            }
        };
        out.publish(
            topic::cmd(&module, joint),
            &JointCommand {
                command: CommandOut::Position(command),
            },
        );
        if let Some((phase, offset)) = status {
            out.publish(topic::calib(&module, joint), &CalibMsg::Status { phase, offset });
            self.states.remove(joint);
        }
    }

    pub fn tick(&mut self, _now: f64, _out: &mut Outbox) {}
}
