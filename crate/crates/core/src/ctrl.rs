//! Remote joint controller strategies and the on-board local controller.
//!
//! A remote strategy runs on the operator side. Each step turns the
//! operator's velocity target and the latest joint reading into a command
//! for the local controller, which tracks it under a velocity limit.
//!
//! Inputs carry only time, the sensor reading and the velocity target.
//! Nothing here looks at peer liveness: a strategy cannot tell whether the
//! link is up, so its safety must come from the command it computes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtrlError {
    #[error("time went from {t_prev} to {t}: strategy steps need strictly increasing time")]
    NonMonotonicTime { t_prev: f64, t: f64 },
    #[error("local controller step needs dt > 0, got {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Speed,
    Integral,
    Offset,
    ClampedIntegral,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::Speed,
        StrategyKind::Integral,
        StrategyKind::Offset,
        StrategyKind::ClampedIntegral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Speed => "speed",
            StrategyKind::Integral => "integral",
            StrategyKind::Offset => "offset",
            StrategyKind::ClampedIntegral => "clamped_integral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyParams {
    /// Largest gap allowed between a clamped command and the joint reading.
    pub delta_e: f64,
    /// Fixed step of the offset strategy.
    pub delta_offset: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            delta_e: 0.05,
            delta_offset: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyInput {
    pub t: f64,
    /// Latest joint reading, radians.
    pub y: f64,
    /// Operator velocity target, rad/s.
    pub r_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum CommandOut {
    Position(f64),
    Velocity(f64),
}

impl CommandOut {
    pub fn value(self) -> f64 {
        match self {
            CommandOut::Position(v) | CommandOut::Velocity(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyState {
    pub kind: StrategyKind,
    pub u_prev: f64,
    pub t_prev: f64,
    pub delta_offset: f64,
    pub delta_e: f64,
}

impl StrategyState {
    /// Start a stream at the joint's current reading.
    pub fn new(kind: StrategyKind, params: StrategyParams, y0: f64, t0: f64) -> Self {
        assert!(params.delta_e > 0.0 && params.delta_offset > 0.0);
        Self {
            kind,
            u_prev: y0,
            t_prev: t0,
            delta_offset: params.delta_offset,
            delta_e: params.delta_e,
        }
    }

    pub fn step(&mut self, input: &StrategyInput) -> Result<CommandOut, CtrlError> {
        match self.kind {
            StrategyKind::Speed => Ok(step_speed(self, input)),
            StrategyKind::Integral => step_integral(self, input),
            StrategyKind::Offset => Ok(step_offset(self, input)),
            StrategyKind::ClampedIntegral => step_clamped(self, input),
        }
    }

    fn elapsed(&self, t: f64) -> Result<f64, CtrlError> {
        if t > self.t_prev {
            Ok(t - self.t_prev)
        } else {
            Err(CtrlError::NonMonotonicTime {
                t_prev: self.t_prev,
                t,
            })
        }
    }
}

/// Velocity passthrough.
pub fn step_speed(state: &mut StrategyState, input: &StrategyInput) -> CommandOut {
    state.t_prev = state.t_prev.max(input.t);
    CommandOut::Velocity(input.r_dot)
}

/// Integrate the velocity target into a position command.
pub fn step_integral(
    state: &mut StrategyState,
    input: &StrategyInput,
) -> Result<CommandOut, CtrlError> {
    let dt = state.elapsed(input.t)?;
    state.u_prev += input.r_dot * dt;
    state.t_prev = input.t;
    Ok(CommandOut::Position(state.u_prev))
}

/// Latest reading plus a fixed step in the direction of motion; holds at the
/// reading when the target is zero.
pub fn step_offset(state: &mut StrategyState, input: &StrategyInput) -> CommandOut {
    let sign = if input.r_dot > 0.0 {
        1.0
    } else if input.r_dot < 0.0 {
        -1.0
    } else {
        0.0
    };
    let u = input.y + sign * state.delta_offset;
    state.u_prev = u;
    state.t_prev = state.t_prev.max(input.t);
    CommandOut::Position(u)
}

/// Integrate, then clamp to within `delta_e` of the reading. The clamped
/// value is what carries over to the next step.
pub fn step_clamped(
    state: &mut StrategyState,
    input: &StrategyInput,
) -> Result<CommandOut, CtrlError> {
    let dt = state.elapsed(input.t)?;
    let integrated = state.u_prev + input.r_dot * dt;
    let u = (input.y - state.delta_e).max((input.y + state.delta_e).min(integrated));
    state.u_prev = u;
    state.t_prev = input.t;
    Ok(CommandOut::Position(u))
}

/// On-board joint state tracked by the local controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalJoint {
    pub angle: f64,
    pub velocity: f64,
    pub v_max: f64,
    pub limits: [f64; 2],
}

impl LocalJoint {
    pub fn new(angle: f64, v_max: f64, limits: [f64; 2]) -> Self {
        Self {
            angle,
            velocity: 0.0,
            v_max,
            limits,
        }
    }
}

/// Closed-loop local controller: track a position under the velocity limit,
/// or run a saturated velocity, and never leave the joint limits.
pub fn local_joint_step(
    joint: LocalJoint,
    command: Option<CommandOut>,
    dt: f64,
) -> Result<LocalJoint, CtrlError> {
    if !(dt > 0.0) {
        return Err(CtrlError::InvalidStep(dt));
    }
    let [lo, hi] = joint.limits;
    let max_step = joint.v_max * dt;
    let next = match command {
        None => joint.angle,
        Some(CommandOut::Position(target)) => {
            let error = target.clamp(lo, hi) - joint.angle;
            if error.abs() <= max_step {
                target.clamp(lo, hi)
            } else {
                joint.angle + max_step.copysign(error)
            }
        }
        Some(CommandOut::Velocity(v)) => {
            (joint.angle + v.clamp(-joint.v_max, joint.v_max) * dt).clamp(lo, hi)
        }
    };
    Ok(LocalJoint {
        angle: next,
        velocity: (next - joint.angle) / dt,
        ..joint
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::model::JOINT_V_MAX;

    fn state(kind: StrategyKind, u: f64, t: f64) -> StrategyState {
        StrategyState::new(kind, StrategyParams::default(), u, t)
    }

    fn input(t: f64, y: f64, r_dot: f64) -> StrategyInput {
        StrategyInput { t, y, r_dot }
    }

    #[test]
    fn speed_is_identity() {
        let mut s = state(StrategyKind::Speed, 0.0, 0.0);
        assert_eq!(step_speed(&mut s, &input(0.1, 3.0, 0.2)), CommandOut::Velocity(0.2));
        assert_eq!(step_speed(&mut s, &input(0.2, 3.0, 0.0)), CommandOut::Velocity(0.0));
    }

    #[test]
    fn integral_accumulates() {
        let mut s = state(StrategyKind::Integral, 0.0, 1.0);
        let u = step_integral(&mut s, &input(1.5, 0.0, 0.1)).unwrap();
        assert!((u.value() - 0.05).abs() < 1e-15);
        let u2 = step_integral(&mut s, &input(2.0, 0.0, 0.0)).unwrap();
        assert_eq!(u2, u);
        assert!(matches!(
            step_integral(&mut s, &input(2.0, 0.0, 0.1)),
            Err(CtrlError::NonMonotonicTime { .. })
        ));
    }

    #[test]
    fn offset_steps_from_the_reading() {
        let mut s = state(StrategyKind::Offset, 0.0, 0.0);
        let u = step_offset(&mut s, &input(0.1, 1.0, 0.4));
        assert!((u.value() - 1.3).abs() < 1e-15);
        assert_eq!(step_offset(&mut s, &input(0.2, 1.0, 0.0)), CommandOut::Position(1.0));
        let u = step_offset(&mut s, &input(0.3, 1.0, -0.01));
        assert!((u.value() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn clamped_cases() {
        let mut s = state(StrategyKind::ClampedIntegral, 0.0, 0.0);
        let u = step_clamped(&mut s, &input(0.1, 0.0, 0.1)).unwrap();
        assert!((u.value() - 0.01).abs() < 1e-15);

        let mut s = state(StrategyKind::ClampedIntegral, 1.0, 0.0);
        let u = step_clamped(&mut s, &input(0.02, 0.0, 0.0)).unwrap();
        assert!((u.value() - 0.05).abs() < 1e-15);
        assert_eq!(s.u_prev, u.value());

        let mut s = state(StrategyKind::ClampedIntegral, 0.7, 0.0);
        assert_eq!(step_clamped(&mut s, &input(0.02, 0.7, 0.0)).unwrap(), CommandOut::Position(0.7));
    }

    #[test]
    fn local_controller_cases() {
        let j = LocalJoint::new(0.0, JOINT_V_MAX, [-3.0, 3.0]);
        let next = local_joint_step(j, Some(CommandOut::Position(1.0)), 0.1).unwrap();
        assert!((next.angle - 0.056_548_667_764_616_28).abs() < 1e-12);
        assert!((next.velocity - JOINT_V_MAX).abs() < 1e-12);

        let still = local_joint_step(j, Some(CommandOut::Position(0.0)), 0.1).unwrap();
        assert_eq!(still.angle, 0.0);
        assert_eq!(still.velocity, 0.0);

        let mut near = LocalJoint::new(2.9, JOINT_V_MAX, [-3.0, 3.0]);
        for _ in 0..100 {
            near = local_joint_step(near, Some(CommandOut::Position(3.2)), 0.02).unwrap();
        }
        assert_eq!(near.angle, 3.0);
        assert_eq!(near.velocity, 0.0);

        let v = local_joint_step(j, Some(CommandOut::Velocity(10.0)), 0.5).unwrap();
        assert!((v.velocity - JOINT_V_MAX).abs() < 1e-12);
        assert!(local_joint_step(j, None, 0.0).is_err());
    }

    #[test]
    fn zero_input_stops_within_one_step() {
        // Every position strategy answers a zero target with a command the
        // local controller reaches in one step, so the next step is still.
        for kind in [StrategyKind::Integral, StrategyKind::Offset, StrategyKind::ClampedIntegral] {
            let mut s = state(kind, 0.3, 0.0);
            let mut joint = LocalJoint::new(0.3, JOINT_V_MAX, [-3.0, 3.0]);
            for k in 1..=5 {
                let cmd = s.step(&input(k as f64 * 0.02, joint.angle, 0.0)).unwrap();
                joint = local_joint_step(joint, Some(cmd), 0.02).unwrap();
                assert_eq!(joint.velocity, 0.0, "{kind:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn clamped_command_stays_within_delta_e(
            y0 in -2.0..2.0f64,
            steps in prop::collection::vec((-0.6..0.6f64, -0.5..0.5f64, any::<bool>()), 1..200),
        ) {
            // Readings arrive or go stale at random; the command never strays
            // more than delta_e from the reading it was computed from.
            let mut s = state(StrategyKind::ClampedIntegral, y0, 0.0);
            let mut y = y0;
            for (k, (r_dot, jump, fresh)) in steps.into_iter().enumerate() {
                if fresh {
                    y += jump * 0.02;
                }
                let u = s.step(&input((k + 1) as f64 * 0.02, y, r_dot)).unwrap().value();
                prop_assert!((u - y).abs() <= s.delta_e + 1e-12);
            }
        }

        #[test]
        fn local_step_never_teleports(
            angle in -3.0..3.0f64,
            target in -5.0..5.0f64,
            velocity_cmd in any::<bool>(),
            dt in 0.001..0.2f64,
        ) {
            let j = LocalJoint::new(angle, JOINT_V_MAX, [-3.0, 3.0]);
            let cmd = if velocity_cmd { CommandOut::Velocity(target) } else { CommandOut::Position(target) };
            let n = local_joint_step(j, Some(cmd), dt).unwrap();
            prop_assert!((n.angle - angle).abs() <= JOINT_V_MAX * dt + 1e-12);
            prop_assert!(n.angle >= -3.0 && n.angle <= 3.0);
        }
    }
}
