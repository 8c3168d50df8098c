//! Forward kinematics, geometric Jacobian and damped-least-squares inverse
//! kinematics for serial chains.

use std::ops::{Deref, DerefMut};

use nalgebra::{DMatrix, DVector, Isometry3, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JointKind, KinematicChain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinError {
    #[error("joint vector has {got} values, chain has {expected} joints")]
    LengthMismatch { expected: usize, got: usize },
    #[error("target unreachable (residual {position_error:.3e} m, {rotation_error:.3e} rad after {iterations} iterations)")]
    Unreachable {
        iterations: usize,
        position_error: f64,
        rotation_error: f64,
    },
    #[error("inverse kinematics diverged after {iterations} iterations")]
    Diverged { iterations: usize },
}

/// Joint positions of a chain, ordered base to tip.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for JointVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self::from_isometry(&Isometry3::identity())
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self {
            position: iso.translation.vector,
            orientation: iso.rotation,
        }
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    /// Position distance and rotation angle between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            self.orientation.angle_to(&other.orientation),
        )
    }

    /// Apply a small world-frame displacement: translation plus rotation vector.
    pub fn nudged(&self, twist: &[f64; 6]) -> Pose {
        let dp = Vector3::new(twist[0], twist[1], twist[2]);
        let dr = UnitQuaternion::from_scaled_axis(Vector3::new(twist[3], twist[4], twist[5]));
        Pose::new(self.position + dp, dr * self.orientation)
    }
}

/// Which components of the tip pose inverse kinematics must match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IkMask {
    #[default]
    Full,
    Position,
}

impl IkMask {
    fn rows(self) -> usize {
        match self {
            IkMask::Full => 6,
            IkMask::Position => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkOptions {
    pub pos_tol: f64,
    pub rot_tol: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub mask: IkMask,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            pos_tol: 1e-4,
            rot_tol: 1e-3,
            max_iters: 200,
            damping: 1e-3,
            mask: IkMask::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub q: JointVector,
    pub iterations: usize,
    pub position_error: f64,
    pub rotation_error: f64,
}

fn check_len(chain: &KinematicChain, q: &[f64]) -> Result<(), KinError> {
    if q.len() != chain.len() {
        return Err(KinError::LengthMismatch {
            expected: chain.len(),
            got: q.len(),
        });
    }
    Ok(())
}

fn joint_motion(kind: JointKind, axis: &Unit<Vector3<f64>>, value: f64) -> Isometry3<f64> {
    match kind {
        JointKind::Revolute => {
            Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(axis, value))
        }
        JointKind::Prismatic => Isometry3::translation(axis.x * value, axis.y * value, axis.z * value),
    }
}

/// Walk the chain, reporting each joint's world origin and axis.
fn walk(
    chain: &KinematicChain,
    q: &[f64],
    mut visit: impl FnMut(usize, &Vector3<f64>, &Vector3<f64>),
) -> Isometry3<f64> {
    let mut frame = Isometry3::translation(chain.base_offset, 0.0, 0.0);
    for (i, (joint, &value)) in chain.joints.iter().zip(q).enumerate() {
        let axis = Unit::new_normalize(Vector3::from(joint.axis));
        visit(i, &frame.translation.vector, &(frame.rotation * axis.into_inner()));
        frame *= joint_motion(joint.kind, &axis, value);
        frame *= Translation3::new(joint.link_length, 0.0, 0.0);
    }
    frame
}

pub fn forward_kinematics(chain: &KinematicChain, q: &[f64]) -> Result<Pose, KinError> {
    check_len(chain, q)?;
    Ok(Pose::from_isometry(&walk(chain, q, |_, _, _| {})))
}

/// Geometric Jacobian of the tip: rows 0..3 linear, rows 3..6 angular.
pub fn jacobian(chain: &KinematicChain, q: &[f64]) -> Result<DMatrix<f64>, KinError> {
    check_len(chain, q)?;
    let mut origins = Vec::with_capacity(q.len());
    let tip = walk(chain, q, |_, origin, axis| origins.push((*origin, *axis)));
    let tip = tip.translation.vector;
    let mut jac = DMatrix::zeros(6, q.len());
    for (i, (origin, axis)) in origins.iter().enumerate() {
        match chain.joints[i].kind {
            JointKind::Revolute => {
                jac.fixed_view_mut::<3, 1>(0, i).copy_from(&axis.cross(&(tip - origin)));
                jac.fixed_view_mut::<3, 1>(3, i).copy_from(axis);
            }
            JointKind::Prismatic => {
                jac.fixed_view_mut::<3, 1>(0, i).copy_from(axis);
            }
        }
    }
    Ok(jac)
}

/// World-frame pose error: translation then rotation vector.
fn pose_error(current: &Pose, target: &Pose, mask: IkMask) -> DVector<f64> {
    let dp = target.position - current.position;
    let mut err = DVector::zeros(mask.rows());
    err.fixed_rows_mut::<3>(0).copy_from(&dp);
    if mask == IkMask::Full {
        let dr = (target.orientation * current.orientation.inverse()).scaled_axis();
        err.fixed_rows_mut::<3>(3).copy_from(&dr);
    }
    err
}

/// Damped least-squares update `Jᵀ (J Jᵀ + λ² I)⁻¹ e`, minimum norm in joint space.
pub fn dls_update(jac: &DMatrix<f64>, err: &DVector<f64>, damping: f64) -> DVector<f64> {
    let rows = err.len();
    let jac = jac.rows(0, rows);
    let jjt = &jac * jac.transpose() + DMatrix::identity(rows, rows) * (damping * damping);
    let solved = jjt
        .clone()
        .cholesky()
        .map(|c| c.solve(err))
        .or_else(|| jjt.lu().solve(err))
        .unwrap_or_else(|| DVector::zeros(rows));
    jac.transpose() * solved
}

/// One damped step from `q` toward `target`, without joint-limit clamping.
pub fn dls_step(
    chain: &KinematicChain,
    q: &[f64],
    target: &Pose,
    damping: f64,
    mask: IkMask,
) -> Result<JointVector, KinError> {
    let current = forward_kinematics(chain, q)?;
    let jac = jacobian(chain, q)?;
    let dq = dls_update(&jac, &pose_error(&current, target, mask), damping);
    Ok(JointVector(dq.iter().copied().collect()))
}

fn clamp_to_limits(chain: &KinematicChain, q: &mut [f64]) {
    for (value, joint) in q.iter_mut().zip(&chain.joints) {
        *value = joint.clamp(*value);
    }
}

fn errors(current: &Pose, target: &Pose, mask: IkMask) -> (f64, f64) {
    let (p, r) = current.distance(target);
    match mask {
        IkMask::Full => (p, r),
        IkMask::Position => (p, 0.0),
    }
}

/// Iterative inverse kinematics with adaptive damping.
///
/// Iterates are clamped to joint limits. A step that raises the residual is
/// rejected and the damping grows tenfold; an accepted step shrinks it back
/// toward `opts.damping`.
pub fn inverse_kinematics(
    chain: &KinematicChain,
    target: &Pose,
    seed: &[f64],
    opts: &IkOptions,
) -> Result<IkSolution, KinError> {
    check_len(chain, seed)?;
    let mut q = seed.to_vec();
    clamp_to_limits(chain, &mut q);
    let mut pose = forward_kinematics(chain, &q)?;
    let (mut pos_err, mut rot_err) = errors(&pose, target, opts.mask);
    let converged = |p: f64, r: f64| p <= opts.pos_tol && r <= opts.rot_tol;
    if converged(pos_err, rot_err) {
        return Ok(IkSolution {
            q: JointVector(q),
            iterations: 0,
            position_error: pos_err,
            rotation_error: rot_err,
        });
    }
    if target.position.norm() > chain.reach() + opts.pos_tol {
        return Err(KinError::Unreachable {
            iterations: 0,
            position_error: pos_err,
            rotation_error: rot_err,
        });
    }

    let mut residual = pose_error(&pose, target, opts.mask).norm();
    let best = residual;
    let mut lambda = opts.damping;
    let mut growth_streak = 0;
    for iteration in 1..=opts.max_iters {
        let jac = jacobian(chain, &q)?;
        let dq = dls_update(&jac, &pose_error(&pose, target, opts.mask), lambda);
        let mut trial: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, d)| a + d).collect();
        clamp_to_limits(chain, &mut trial);
        let trial_pose = forward_kinematics(chain, &trial)?;
        let trial_residual = pose_error(&trial_pose, target, opts.mask).norm();

        if trial_residual > 10.0 * best {
            growth_streak += 1;
            if growth_streak >= 20 {
                return Err(KinError::Diverged {
                    iterations: iteration,
                });
            }
        } else {
            growth_streak = 0;
        }

        if trial_residual < residual {
            q = trial;
            pose = trial_pose;
            residual = trial_residual;
            lambda = (lambda / 10.0).max(opts.damping);
            (pos_err, rot_err) = errors(&pose, target, opts.mask);
            if converged(pos_err, rot_err) {
                return Ok(IkSolution {
                    q: JointVector(q),
                    iterations: iteration,
                    position_error: pos_err,
                    rotation_error: rot_err,
                });
            }
        } else {
            lambda = (lambda * 10.0).min(1e6);
        }
    }
    Err(KinError::Unreachable {
        iterations: opts.max_iters,
        position_error: pos_err,
        rotation_error: rot_err,
    })
}
