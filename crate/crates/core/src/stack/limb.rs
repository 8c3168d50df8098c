//! Level 3: long-running joint-space trajectories, emitted just in time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{decode, topic, EventKind, JointCommand, LimbMsg, Outbox, SensorMsg, StackParams, Waypoint};
use crate::bus::Envelope;
use crate::ctrl::CommandOut;
use crate::kin::JointVector;
use crate::model::KinematicChain;

const ARRIVAL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimbTrajectory {
    pub waypoints: Vec<Waypoint>,
    /// Index of the next waypoint not yet passed.
    pub issued_up_to: usize,
}

impl LimbTrajectory {
    /// Checks lengths, limits and strictly increasing non-negative times.
    pub fn new(chain: &KinematicChain, waypoints: Vec<Waypoint>) -> Result<Self, String> {
        let mut t_prev = f64::NEG_INFINITY;
        for (i, w) in waypoints.iter().enumerate() {
            if w.q.len() != chain.len() {
                return Err(format!("waypoint {i}: {} values for {} joints", w.q.len(), chain.len()));
            }
            if !(w.t >= 0.0) || w.t <= t_prev {
                return Err(format!("waypoint {i}: time {} not increasing", w.t));
            }
            t_prev = w.t;
            for (q, j) in w.q.iter().zip(&chain.joints) {
                if !j.within_limits(*q) {
                    return Err(format!("waypoint {i}: {} = {q} outside limits", j.name));
                }
            }
        }
        Ok(Self {
            waypoints,
            issued_up_to: 0,
        })
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.t)
    }

    /// Linear interpolation from `start` (at time zero) through the waypoints.
    pub fn sample(&self, start: &[f64], t: f64) -> JointVector {
        let mut prev_q: &[f64] = start;
        let mut prev_t = 0.0;
        for w in &self.waypoints {
            if t < w.t {
                let s = (t - prev_t) / (w.t - prev_t);
                return JointVector(prev_q.iter().zip(w.q.iter()).map(|(a, b)| a + (b - a) * s).collect());
            }
            prev_q = &w.q;
            prev_t = w.t;
        }
        JointVector(prev_q.to_vec())
    }
}

#[derive(Debug, Clone)]
struct Active {
    traj: LimbTrajectory,
    start_time: f64,
    start_q: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LimbNode {
    pub node_id: String,
    pub chain: KinematicChain,
    delta_e: f64,
    sensed: BTreeMap<String, f64>,
    incoming: Option<Vec<Waypoint>>,
    active: Option<Active>,
}

impl LimbNode {
    pub fn new(node_id: &str, chain: KinematicChain, params: StackParams) -> Self {
        Self {
            node_id: node_id.to_string(),
            chain,
            delta_e: params.delta_e,
            sensed: BTreeMap::new(),
            incoming: None,
            active: None,
        }
    }

    pub fn is_active(&self) -> bool {
        self.active.is_some() || self.incoming.is_some()
    }

    pub fn trajectory(&self) -> Option<&LimbTrajectory> {
        self.active.as_ref().map(|a| &a.traj)
    }

    pub fn on_message(&mut self, env: &Envelope, _now: f64, _out: &mut Outbox) {
        if let Some((_, joint)) = topic::split(&env.topic, "sensor") {
            if let Some(msg) = decode::<SensorMsg>(&env.payload) {
                self.sensed.insert(joint.to_string(), msg.angle);
            }
            return;
        }
        match decode::<LimbMsg>(&env.payload) {
            Some(LimbMsg::Waypoints { waypoints }) => self.incoming = Some(waypoints),
            Some(_) => {
                self.incoming = None;
                self.active = None;
            }
            None => {}
        }
    }

    pub fn tick(&mut self, now: f64, out: &mut Outbox) {
        let y: Option<Vec<f64>> = self
            .chain
            .joints
            .iter()
            .map(|j| self.sensed.get(&j.name).copied())
            .collect();
        let Some(y) = y else { return };
        if let Some(waypoints) = self.incoming.take() {
            self.active = None;
            match LimbTrajectory::new(&self.chain, waypoints) {
                Err(reason) => {
                    out.event(now, &self.node_id, EventKind::TrajectoryRejected, reason);
                    return;
                }
                Ok(traj) if traj.waypoints.is_empty() => {
                    out.event(now, &self.node_id, EventKind::TrajectoryDone, "empty");
                    return;
                }
                Ok(traj) => {
                    self.active = Some(Active {
                        traj,
                        start_time: now,
                        start_q: y.clone(),
                    })
                }
            }
        }
        let Some(active) = &mut self.active else { return };
        let elapsed = now - active.start_time;
        let q = active.traj.sample(&active.start_q, elapsed);
        active.traj.issued_up_to = active.traj.waypoints.partition_point(|w| w.t <= elapsed);
        for ((joint, &q), &y) in self.chain.joints.iter().zip(q.iter()).zip(&y) {
            out.publish(
                topic::cmd(&self.chain.module, &joint.name),
                &JointCommand {
                    command: CommandOut::Position(q.clamp(y - self.delta_e, y + self.delta_e)),
                },
            );
        }
        let finished = elapsed >= active.traj.duration() && q.max_abs_diff(&JointVector(y)) <= ARRIVAL_TOL;
        if finished {
            out.event(now, &self.node_id, EventKind::TrajectoryDone, self.chain.module.clone());
            self.active = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    fn chain() -> KinematicChain {
        presets::minimal().chains[0].clone()
    }

    fn wp(q: [f64; 7], t: f64) -> Waypoint {
        Waypoint {
            q: JointVector(q.to_vec()),
            t,
        }
    }

    #[test]
    fn rejects_out_of_limit_waypoint_whole() {
        let mut q = [0.0; 7];
        q[1] = 2.5;
        let err = LimbTrajectory::new(&chain(), vec![wp([0.1; 7], 1.0), wp(q, 2.0)]).unwrap_err();
        assert!(err.contains("outside limits"));
    }

    #[test]
    fn rejects_non_increasing_times() {
        assert!(LimbTrajectory::new(&chain(), vec![wp([0.1; 7], 1.0), wp([0.2; 7], 1.0)]).is_err());
    }

    #[test]
    fn sample_interpolates_and_holds_end() {
        let t = LimbTrajectory::new(&chain(), vec![wp([0.2; 7], 1.0), wp([0.4; 7], 2.0)]).unwrap();
        let start = [0.0; 7];
        assert!((t.sample(&start, 0.5)[0] - 0.1).abs() < 1e-15);
        assert!((t.sample(&start, 1.5)[3] - 0.3).abs() < 1e-15);
        assert_eq!(t.sample(&start, 9.0)[6], 0.4);
    }
}
