//! Leg forward/inverse kinematics between the pelvis frame and each sole
//! frame, plus the lumped-mass centre of mass.
//!
//! Chain (proximal to distal): hip yaw (z), hip roll (x), hip pitch (y),
//! knee pitch (y), ankle pitch (y), ankle roll (x). All hip axes intersect at
//! the hip point and both ankle axes at the ankle point, which admits the
//! closed-form solution in [`inverse_leg`]. Orientations use intrinsic
//! Z-Y-X (yaw, pitch, roll); positive pitch turns the toe down, positive roll
//! raises the left edge of the sole.

use nalgebra::{Matrix6, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::model::{Axis, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// +1 for left, -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }

    fn prefix(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegJoint {
    HipYaw,
    HipRoll,
    HipPitch,
    Knee,
    AnklePitch,
    AnkleRoll,
}

impl LegJoint {
    pub const ALL: [LegJoint; 6] = [
        LegJoint::HipYaw,
        LegJoint::HipRoll,
        LegJoint::HipPitch,
        LegJoint::Knee,
        LegJoint::AnklePitch,
        LegJoint::AnkleRoll,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            LegJoint::HipYaw => "hip_yaw",
            LegJoint::HipRoll => "hip_roll",
            LegJoint::HipPitch => "hip_pitch",
            LegJoint::Knee => "knee_pitch",
            LegJoint::AnklePitch => "ankle_pitch",
            LegJoint::AnkleRoll => "ankle_roll",
        }
    }

    /// Config-file joint name, e.g. `left_knee_pitch`.
    pub fn name(self, side: Side) -> String {
        format!("{}_{}", side.prefix(), self.suffix())
    }

    pub fn axis(self) -> Axis {
        match self {
            LegJoint::HipYaw => Axis::Yaw,
            LegJoint::HipRoll | LegJoint::AnkleRoll => Axis::Roll,
            LegJoint::HipPitch | LegJoint::Knee | LegJoint::AnklePitch => Axis::Pitch,
        }
    }
}

/// Rigid pose: position in metres and orientation as a rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            rotation: Rotation3::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, rotation: Rotation3<f64>) -> Self {
        Self { position, rotation }
    }

    /// Builds `Rz(yaw)·Ry(pitch)·Rx(roll)`.
    pub fn from_xyz_rpy(x: f64, y: f64, z: f64, roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
            rotation: Rotation3::from_euler_angles(roll, pitch, yaw),
        }
    }

    /// (roll, pitch, yaw); unambiguous for |pitch| < π/2.
    pub fn rpy(&self) -> (f64, f64, f64) {
        self.rotation.euler_angles()
    }

    pub fn roll(&self) -> f64 {
        self.rpy().0
    }

    pub fn pitch(&self) -> f64 {
        self.rpy().1
    }

    pub fn yaw(&self) -> f64 {
        self.rpy().2
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation * other.position,
            rotation: self.rotation * other.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r = self.rotation.inverse();
        Pose {
            position: -(r * self.position),
            rotation: r,
        }
    }

    /// `self⁻¹ · other`: `other` expressed in this frame.
    pub fn relative(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.rotation * p
    }

    /// Mirror across the x-z plane.
    pub fn mirrored(&self) -> Pose {
        let (r, p, y) = self.rpy();
        Pose::from_xyz_rpy(
            self.position.x,
            -self.position.y,
            self.position.z,
            -r,
            p,
            -y,
        )
    }

    /// Rotation angle between two orientations, rad.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        // atan2 form stays accurate near zero, unlike acos of the trace
        let m = self.rotation.rotation_to(&other.rotation).into_inner();
        let v = Vector3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        );
        v.norm().atan2(m.trace() - 1.0)
    }
}

/// Six leg joint angles ordered hip yaw, hip roll, hip pitch, knee pitch,
/// ankle pitch, ankle roll.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegJointVector {
    pub side: Side,
    pub angles: [f64; 6],
}

impl LegJointVector {
    pub fn new(side: Side, angles: [f64; 6]) -> Self {
        Self { side, angles }
    }

    pub fn zeros(side: Side) -> Self {
        Self::new(side, [0.0; 6])
    }

    pub fn get(&self, joint: LegJoint) -> f64 {
        self.angles[joint as usize]
    }

    /// Same posture on the opposite leg (roll and yaw negated).
    pub fn mirrored(&self) -> Self {
        let a = self.angles;
        Self::new(self.side.other(), [-a[0], -a[1], a[2], a[3], a[4], -a[5]])
    }

    /// Reports the first joint outside its range.
    pub fn check_limits(&self, model: &RobotModel) -> Result<(), KinematicsError> {
        for (lj, &q) in LegJoint::ALL.iter().zip(self.angles.iter()) {
            let spec = model.leg_joint(self.side, *lj);
            if !q.is_finite() || !spec.contains(q) {
                return Err(KinematicsError::JointLimit {
                    joint: spec.name.clone(),
                    value: q,
                    min: spec.range_min,
                    max: spec.range_max,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("joint {joint} at {value:.6} rad is outside [{min:.6}, {max:.6}]")]
    JointLimit {
        joint: String,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("target is outside the leg workspace by {shortfall:.6} m")]
    Unreachable { shortfall: f64 },
    #[error("numeric IK did not converge after {iterations} iterations (residual {residual:.3e})")]
    OracleFailure { iterations: usize, residual: f64 },
}

/// Joint positions of one leg in the pelvis frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegFrames {
    pub hip: Vector3<f64>,
    pub knee: Vector3<f64>,
    pub ankle: Vector3<f64>,
    pub sole: Pose,
}

fn rx(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::x_axis(), a)
}

fn ry(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

fn rz(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

pub fn hip_position(side: Side, model: &RobotModel) -> Vector3<f64> {
    Vector3::new(0.0, side.sign() * model.leg.hip_offset_y, 0.0)
}

/// Forward kinematics without limit checks.
pub fn leg_frames(joints: &LegJointVector, model: &RobotModel) -> LegFrames {
    let [q0, q1, q2, q3, q4, q5] = joints.angles;
    let leg = &model.leg;
    let hip = hip_position(joints.side, model);
    let r_hip = rz(q0) * rx(q1) * ry(q2);
    let knee = hip + r_hip * Vector3::new(0.0, 0.0, -leg.thigh_length);
    let r_knee = r_hip * ry(q3);
    let ankle = knee + r_knee * Vector3::new(0.0, 0.0, -leg.shank_length);
    let r_sole = r_knee * ry(q4) * rx(q5);
    let sole = Pose::new(
        ankle + r_sole * Vector3::new(0.0, 0.0, -leg.ankle_height),
        r_sole,
    );
    LegFrames {
        hip,
        knee,
        ankle,
        sole,
    }
}

/// Sole pose in the pelvis frame.
pub fn forward_leg(joints: &LegJointVector, model: &RobotModel) -> Result<Pose, KinematicsError> {
    joints.check_limits(model)?;
    Ok(leg_frames(joints, model).sole)
}

/// Closed-form leg IK, knee-forward branch (knee pitch ≥ 0).
pub fn inverse_leg(
    pelvis: &Pose,
    sole: &Pose,
    side: Side,
    model: &RobotModel,
) -> Result<LegJointVector, KinematicsError> {
    let joints = inverse_leg_unchecked(pelvis, sole, side, model)?;
    joints.check_limits(model)?;
    Ok(joints)
}

/// Geometric solution without joint-range checks. Picks the branch with the
/// hip above the ankle in sole axes and the hip roll within ±90°.
pub fn inverse_leg_unchecked(
    pelvis: &Pose,
    sole: &Pose,
    side: Side,
    model: &RobotModel,
) -> Result<LegJointVector, KinematicsError> {
    let leg = &model.leg;
    let (a, b) = (leg.thigh_length, leg.shank_length);
    let target = pelvis.relative(sole);
    let r_sole = target.rotation;
    let ankle = target.position + r_sole * Vector3::new(0.0, 0.0, leg.ankle_height);
    let hip = hip_position(side, model);
    // hip seen from the ankle, in sole axes
    let r = r_sole.inverse() * (hip - ankle);
    let dist = r.norm();
    let reach = a + b;
    if dist > reach + 1e-12 {
        return Err(KinematicsError::Unreachable {
            shortfall: dist - reach,
        });
    }
    if dist < (a - b).abs() - 1e-12 {
        return Err(KinematicsError::Unreachable {
            shortfall: (a - b).abs() - dist,
        });
    }
    let cos_knee = ((dist * dist - a * a - b * b) / (2.0 * a * b)).clamp(-1.0, 1.0);
    let knee = cos_knee.acos();

    let ankle_roll = r.y.atan2(r.z);
    let rz_after_roll = (r.y * r.y + r.z * r.z).sqrt();
    let ankle_pitch = (-a * knee.sin()).atan2(a * knee.cos() + b) - r.x.atan2(rz_after_roll);

    let r_hip = r_sole * rx(-ankle_roll) * ry(-(knee + ankle_pitch));
    let m = r_hip.matrix();
    let hip_yaw = (-m[(0, 1)]).atan2(m[(1, 1)]);
    let hip_roll = m[(2, 1)].atan2((m[(2, 0)].powi(2) + m[(2, 2)].powi(2)).sqrt());
    let hip_pitch = (-m[(2, 0)]).atan2(m[(2, 2)]);

    Ok(LegJointVector::new(
        side,
        [hip_yaw, hip_roll, hip_pitch, knee, ankle_pitch, ankle_roll],
    ))
}

fn pose_error(target: &Pose, current: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    // skew part of the relative rotation: sin(angle) times the axis, which
    // keeps full precision for small errors
    let m = (target.rotation * current.rotation.inverse()).into_inner();
    let dr = Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    ) / 2.0;
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Damped least-squares IK with a finite-difference Jacobian. Independent of
/// [`inverse_leg`]; used to cross-check it.
pub fn numeric_ik_oracle(
    pelvis: &Pose,
    sole: &Pose,
    model: &RobotModel,
    seed: &LegJointVector,
) -> Result<LegJointVector, KinematicsError> {
    const MAX_ITER: usize = 500;
    const STEP: f64 = 1e-7;
    const TOL: f64 = 1e-11;
    let target = pelvis.relative(sole);
    let side = seed.side;
    let limits: Vec<(f64, f64)> = LegJoint::ALL
        .iter()
        .map(|lj| {
            let s = model.leg_joint(side, *lj);
            (s.range_min, s.range_max)
        })
        .collect();
    let mut q = Vector6::from_row_slice(&seed.angles);
    let fk = |q: &Vector6<f64>| {
        let jv = LegJointVector::new(side, [q[0], q[1], q[2], q[3], q[4], q[5]]);
        leg_frames(&jv, model).sole
    };
    let mut err = pose_error(&target, &fk(&q));
    let mut lambda = 1e-3;
    for _ in 0..MAX_ITER {
        if err.norm() < TOL {
            let out = LegJointVector::new(side, [q[0], q[1], q[2], q[3], q[4], q[5]]);
            out.check_limits(model)?;
            return Ok(out);
        }
        let mut jac = Matrix6::zeros();
        for i in 0..6 {
            let mut qp = q;
            qp[i] += STEP;
            let col = (pose_error(&target, &fk(&qp)) - err) / STEP;
            jac.set_column(i, &col);
        }
        let jt = jac.transpose();
        let lhs = jac * jt + Matrix6::identity() * (lambda * lambda);
        let Some(chol) = lhs.cholesky() else {
            break;
        };
        let dq = -(jt * chol.solve(&err));
        let mut q_new = q + dq;
        for (i, (lo, hi)) in limits.iter().enumerate() {
            q_new[i] = q_new[i].clamp(*lo, *hi);
        }
        let err_new = pose_error(&target, &fk(&q_new));
        if err_new.norm() < err.norm() {
            q = q_new;
            err = err_new;
            lambda = (lambda * 0.3).max(1e-9);
        } else {
            lambda *= 10.0;
            if lambda > 1e3 {
                break;
            }
        }
    }
    Err(KinematicsError::OracleFailure {
        iterations: MAX_ITER,
        residual: err.norm(),
    })
}

/// World-frame CoM positions and masses of the seven lumped links: pelvis/torso,
/// then thigh, shank, foot of the left leg, then of the right leg.
pub fn link_points(
    left: &LegJointVector,
    right: &LegJointVector,
    pelvis: &Pose,
    model: &RobotModel,
) -> [(f64, Vector3<f64>); 7] {
    let m = &model.masses;
    let torso = pelvis.transform_point(&Vector3::new(0.0, 0.0, m.pelvis_com_offset_z));
    let leg_links = |j: &LegJointVector| {
        let f = leg_frames(j, model);
        let foot_com = (f.ankle + f.sole.position) / 2.0;
        [
            (m.thigh, pelvis.transform_point(&((f.hip + f.knee) / 2.0))),
            (m.shank, pelvis.transform_point(&((f.knee + f.ankle) / 2.0))),
            (m.foot, pelvis.transform_point(&foot_com)),
        ]
    };
    let l = leg_links(left);
    let r = leg_links(right);
    [(m.pelvis_torso, torso), l[0], l[1], l[2], r[0], r[1], r[2]]
}

/// Whole-robot centre of mass in the world frame.
pub fn com_position(
    left: &LegJointVector,
    right: &LegJointVector,
    pelvis: &Pose,
    model: &RobotModel,
) -> Result<Vector3<f64>, KinematicsError> {
    left.check_limits(model)?;
    right.check_limits(model)?;
    let pts = link_points(left, right, pelvis, model);
    let total: f64 = pts.iter().map(|(m, _)| m).sum();
    let weighted: Vector3<f64> = pts.iter().map(|(m, p)| p * *m).sum();
    Ok(weighted / total)
}

/// Outcome of [`self_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheck {
    pub configurations: usize,
    /// Largest FK-IK-FK sole position discrepancy, m.
    pub max_position_error: f64,
    /// Largest FK-IK-FK sole orientation discrepancy, rad.
    pub max_orientation_error: f64,
}

/// Tolerance for the FK-IK-FK round trip in [`self_check`].
pub const SELF_CHECK_TOLERANCE: f64 = 1e-9;

/// Round-trips a canned joint-space grid through FK and IK on both legs,
/// and checks that the straight-leg zero pose is solvable within limits.
pub fn self_check(model: &RobotModel) -> Result<SelfCheck, KinematicsError> {
    let pelvis = Pose::identity();
    let mut out = SelfCheck {
        configurations: 0,
        max_position_error: 0.0,
        max_orientation_error: 0.0,
    };
    for side in [Side::Left, Side::Right] {
        let zero = leg_frames(&LegJointVector::zeros(side), model).sole;
        inverse_leg(&pelvis, &zero, side, model)?;
        // interior fractions of each joint range; knee kept on the forward branch
        for &f in &[0.3, 0.5, 0.7] {
            for &g in &[0.35, 0.65] {
                let mut q = [0.0; 6];
                for (i, lj) in LegJoint::ALL.iter().enumerate() {
                    let spec = model.leg_joint(side, *lj);
                    let lo = if *lj == LegJoint::Knee {
                        spec.range_min.max(0.05)
                    } else {
                        spec.range_min
                    };
                    let frac = if i % 2 == 0 { f } else { g };
                    q[i] = lo + (spec.range_max - lo) * frac;
                }
                let joints = LegJointVector::new(side, q);
                let target = leg_frames(&joints, model).sole;
                let solved = inverse_leg(&pelvis, &target, side, model)?;
                let back = leg_frames(&solved, model).sole;
                out.configurations += 1;
                out.max_position_error = out
                    .max_position_error
                    .max((back.position - target.position).norm());
                out.max_orientation_error = out.max_orientation_error.max(back.angle_to(&target));
            }
        }
    }
    Ok(out)
}
