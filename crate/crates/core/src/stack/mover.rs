//! Level 4: synchronized multi-limb motion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{decode, topic, EventKind, LimbMsg, MoverRequest, Outbox, SensorMsg, StackParams, Waypoint};
use crate::bus::Envelope;
use crate::kin::JointVector;
use crate::model::{KinematicChain, RobotDescription};
use crate::stack::LimbTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoverPlan {
    pub targets: BTreeMap<String, JointVector>,
    pub common_duration: f64,
}

/// Shared-duration straight joint-space moves for every limb in `targets`.
///
/// All-or-nothing: any unknown limb, missing state or out-of-limit target
/// rejects the whole plan.
pub fn mover_sync(
    chains: &BTreeMap<String, KinematicChain>,
    current: &BTreeMap<String, JointVector>,
    targets: &BTreeMap<String, JointVector>,
) -> Result<(MoverPlan, BTreeMap<String, LimbTrajectory>), String> {
    if targets.is_empty() {
        return Err("no limbs in plan".into());
    }
    let mut duration: f64 = 0.0;
    for (limb, target) in targets {
        let chain = chains.get(limb).ok_or_else(|| format!("unknown limb {limb}"))?;
        let q = current.get(limb).ok_or_else(|| format!("no state for {limb}"))?;
        if target.len() != chain.len() {
            return Err(format!("{limb}: {} values for {} joints", target.len(), chain.len()));
        }
        for ((j, &goal), &now) in chain.joints.iter().zip(target.iter()).zip(q.iter()) {
            if !j.within_limits(goal) {
                return Err(format!("{limb}/{}: {goal} outside limits", j.name));
            }
            duration = duration.max((goal - now).abs() / j.v_max);
        }
    }
    let mut trajectories = BTreeMap::new();
    for (limb, target) in targets {
        let waypoints = if duration > 0.0 {
            vec![Waypoint {
                q: target.clone(),
                t: duration,
            }]
        } else {
            Vec::new()
        };
        trajectories.insert(limb.clone(), LimbTrajectory::new(&chains[limb], waypoints)?);
    }
    Ok((
        MoverPlan {
            targets: targets.clone(),
            common_duration: duration,
        },
        trajectories,
    ))
}

#[derive(Debug, Clone)]
pub struct MoverNode {
    pub node_id: String,
    chains: BTreeMap<String, KinematicChain>,
    sensed: BTreeMap<String, BTreeMap<String, f64>>,
    pub last_plan: Option<MoverPlan>,
}

impl MoverNode {
    pub fn new(node_id: &str, desc: &RobotDescription, _params: StackParams) -> Self {
        Self {
            node_id: node_id.to_string(),
            chains: desc.chains.iter().map(|c| (c.module.clone(), c.clone())).collect(),
            sensed: BTreeMap::new(),
            last_plan: None,
        }
    }

    fn current(&self) -> BTreeMap<String, JointVector> {
        self.chains
            .iter()
            .filter_map(|(limb, chain)| {
                let s = self.sensed.get(limb)?;
                let q: Option<Vec<f64>> = chain.joints.iter().map(|j| s.get(&j.name).copied()).collect();
                Some((limb.clone(), JointVector(q?)))
            })
            .collect()
    }

    pub fn on_message(&mut self, env: &Envelope, now: f64, out: &mut Outbox) {
        if let Some((module, joint)) = topic::split(&env.topic, "sensor") {
            if let Some(msg) = decode::<SensorMsg>(&env.payload) {
                self.sensed
                    .entry(module.to_string())
                    .or_default()
                    .insert(joint.to_string(), msg.angle);
            }
            return;
        }
        if env.topic != topic::MOVER_PLAN {
            return;
        }
        let Some(request) = decode::<MoverRequest>(&env.payload) else { return };
        match mover_sync(&self.chains, &self.current(), &request.targets) {
            Err(reason) => out.event(now, &self.node_id, EventKind::PlanRejected, reason),
            Ok((plan, trajectories)) => {
                for (limb, traj) in trajectories {
                    out.publish(
                        topic::traj(&limb),
                        &LimbMsg::Waypoints {
                            waypoints: traj.waypoints,
                        },
                    );
                }
                out.event(
                    now,
                    &self.node_id,
                    EventKind::PlanIssued,
                    format!("duration {:.3}", plan.common_duration),
                );
                self.last_plan = Some(plan);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, JOINT_V_MAX};

    fn chains() -> BTreeMap<String, KinematicChain> {
        presets::dragon()
            .chains
            .iter()
            .map(|c| (c.module.clone(), c.clone()))
            .collect()
    }

    fn jv(v: f64, at: usize) -> JointVector {
        let mut q = vec![0.0; 7];
        q[at] = v;
        JointVector(q)
    }

    #[test]
    fn duration_is_slowest_limb() {
        let current: BTreeMap<_, _> = [("limb1".into(), jv(0.0, 0)), ("limb2".into(), jv(0.0, 0))].into();
        let targets: BTreeMap<_, _> = [
            ("limb1".into(), jv(JOINT_V_MAX, 2)),
            ("limb2".into(), jv(-2.0 * JOINT_V_MAX, 4)),
        ]
        .into();
        let (plan, trajs) = mover_sync(&chains(), &current, &targets).unwrap();
        assert!((plan.common_duration - 2.0).abs() < 1e-12);
        assert!(trajs.values().all(|t| t.duration() == plan.common_duration));
    }

    #[test]
    fn single_limb_equals_solo() {
        let current: BTreeMap<_, _> = [("limb1".into(), jv(0.0, 0))].into();
        let targets: BTreeMap<_, _> = [("limb1".into(), jv(0.3, 1))].into();
        let (plan, trajs) = mover_sync(&chains(), &current, &targets).unwrap();
        let solo = 0.3 / JOINT_V_MAX;
        assert!((plan.common_duration - solo).abs() < 1e-15);
        assert_eq!(trajs["limb1"].waypoints[0].q, targets["limb1"]);
    }

    #[test]
    fn out_of_limits_rejects_everything() {
        let current: BTreeMap<_, _> = [("limb1".into(), jv(0.0, 0)), ("limb2".into(), jv(0.0, 0))].into();
        let targets: BTreeMap<_, _> = [("limb1".into(), jv(0.3, 1)), ("limb2".into(), jv(2.5, 1))].into();
        assert!(mover_sync(&chains(), &current, &targets).is_err());
    }
}
