//! Walking pattern generation: footsteps, the SS/DS phase timeline,
//! polynomial swing-foot and pelvis trajectories, and per-tick joint targets.
//!
//! Task-space motion is parameterised by polynomials so that joint
//! trajectories obtained through IK stay smooth. The pelvis x/y coefficients
//! are fitted so that the multi-link ZMP tracks a reference that sits on the
//! stance foot during single support and moves linearly between feet during
//! double support.

mod pelvis;
mod swing;
mod zmp;

pub use pelvis::{optimize_pelvis_trajectory, PelvisFit, PelvisOptions};
pub use swing::generate_swing_trajectory;
pub use zmp::{compute_zmp, convex_hull, planned_zmp, polygon_margin, support_polygon, ZmpPoint};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

use crate::kinematics::{inverse_leg, KinematicsError, LegJoint, LegJointVector, Pose, Side};
use crate::model::RobotModel;
use crate::poly::{PiecewisePolynomial, PolyError, PolySegment};
use crate::CONTROL_DT;

/// Channel layout of foot and pelvis trajectories.
pub mod channel {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const ROLL: usize = 3;
    pub const PITCH: usize = 4;
    pub const YAW: usize = 5;
}

/// Straight-knee margin enforced on planned motion, m.
pub const EXTENSION_MARGIN: f64 = 0.0005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaitParams {
    pub step_length: f64,
    pub step_width: f64,
    /// Swing apex above the higher of the two footholds, m.
    pub step_height: f64,
    pub t_ss: f64,
    pub t_ds: f64,
    pub n_steps: usize,
    pub control_dt: f64,
    /// Initial double support before the first swing, s.
    pub t_init: f64,
    /// Final double support after the closing step, s.
    pub t_final: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            step_length: 0.2,
            step_width: 0.23,
            step_height: 0.05,
            t_ss: 0.8,
            t_ds: 0.2,
            n_steps: 6,
            control_dt: CONTROL_DT,
            t_init: 1.0,
            t_final: 1.0,
        }
    }
}

fn ticks_of(duration: f64, dt: f64, field: &str) -> Result<usize, PlanError> {
    let n = (duration / dt).round();
    if !(duration > 0.0) || (n * dt - duration).abs() > 1e-9 {
        return Err(PlanError::InvalidParams {
            field: field.into(),
            reason: format!("{duration} s is not a positive multiple of the {dt} s control period"),
        });
    }
    Ok(n as usize)
}

impl GaitParams {
    pub fn validate(&self, model: &RobotModel) -> Result<(), PlanError> {
        let bad = |field: &str, reason: &str| PlanError::InvalidParams {
            field: field.into(),
            reason: reason.into(),
        };
        if !(self.control_dt > 0.0) {
            return Err(bad("control_dt", "must be positive"));
        }
        for (v, f) in [
            (self.t_ss, "t_ss"),
            (self.t_ds, "t_ds"),
            (self.t_init, "t_init"),
            (self.t_final, "t_final"),
        ] {
            ticks_of(v, self.control_dt, f)?;
        }
        if !(self.step_length.is_finite() && self.step_length >= 0.0) {
            return Err(bad("step_length", "must be finite and non-negative"));
        }
        if !(self.step_width.is_finite() && self.step_width > 0.0) {
            return Err(bad("step_width", "must be positive"));
        }
        if !(self.step_height.is_finite() && self.step_height >= 0.0) {
            return Err(bad("step_height", "must be non-negative"));
        }
        if self.step_height <= model.foot.sensor_range {
            log::warn!(
                "step height {} m does not exceed the probe range {} m",
                self.step_height,
                model.foot.sensor_range
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    DoubleSupport,
    SingleSupport { support: Side },
}

impl Phase {
    pub fn is_single(&self) -> bool {
        matches!(self, Phase::SingleSupport { .. })
    }

    pub fn swing(&self) -> Option<Side> {
        match self {
            Phase::SingleSupport { support } => Some(support.other()),
            Phase::DoubleSupport => None,
        }
    }

    /// `DS`, `SS_L` (left support) or `SS_R`.
    pub fn label(&self) -> &'static str {
        match self {
            Phase::DoubleSupport => "DS",
            Phase::SingleSupport {
                support: Side::Left,
            } => "SS_L",
            Phase::SingleSupport {
                support: Side::Right,
            } => "SS_R",
        }
    }

    pub fn from_label(s: &str) -> Option<Phase> {
        match s {
            "DS" => Some(Phase::DoubleSupport),
            "SS_L" => Some(Phase::SingleSupport {
                support: Side::Left,
            }),
            "SS_R" => Some(Phase::SingleSupport {
                support: Side::Right,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Footstep {
    pub side: Side,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseInterval {
    pub phase: Phase,
    pub start_tick: usize,
    pub end_tick: usize,
    pub start: f64,
    pub end: f64,
    /// For SS: index into `footsteps` of the swing target.
    pub target: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid gait parameter `{field}`: {reason}")]
    InvalidParams { field: String, reason: String },
    #[error("plan infeasible at tick {tick} (t = {t:.3} s): {source}")]
    Infeasible {
        tick: usize,
        t: f64,
        #[source]
        source: KinematicsError,
    },
    #[error("plan infeasible at tick {tick}: leg within {margin} m of full extension")]
    Overextended { tick: usize, margin: f64 },
    #[error("joint {joint} speed {speed:.3} rad/s exceeds {max:.3} rad/s at tick {tick}")]
    SpeedLimit {
        tick: usize,
        joint: String,
        speed: f64,
        max: f64,
    },
    #[error("continuity constraints are rank deficient at knot {knot} (t = {t:.3} s)")]
    RankDeficient { knot: usize, t: f64 },
    #[error("ZMP undefined at sample {index}: total vertical force surrogate is not positive")]
    DynamicInfeasibility { index: usize },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Footprints: the two initial side-by-side feet followed by one target per
/// swing. The first swing is a half step, later ones advance `step_length`
/// past the previous footprint, and a closing step brings the trailing foot
/// beside the leading one. Left swings first.
pub fn plan_footsteps(params: &GaitParams, start_pose: &Pose) -> Vec<Footstep> {
    let yaw = start_pose.yaw();
    let place = |side: Side, x: f64| {
        let local = Vector3::new(x, side.sign() * params.step_width / 2.0, 0.0);
        let ground = Pose::from_xyz_rpy(
            start_pose.position.x,
            start_pose.position.y,
            start_pose.position.z,
            0.0,
            0.0,
            yaw,
        );
        Footstep {
            side,
            pose: Pose::new(ground.transform_point(&local), ground.rotation),
        }
    };
    let mut steps = vec![place(Side::Left, 0.0), place(Side::Right, 0.0)];
    let n = params.n_steps;
    if n == 0 {
        return steps;
    }
    let l = params.step_length;
    let mut side = Side::Left;
    for j in 0..n {
        steps.push(place(side, (j as f64 + 0.5) * l));
        side = side.other();
    }
    steps.push(place(side, (n as f64 - 0.5) * l));
    steps
}

/// Everything but the pelvis trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSkeleton {
    pub params: GaitParams,
    pub footsteps: Vec<Footstep>,
    pub phases: Vec<PhaseInterval>,
    pub left_foot_traj: PiecewisePolynomial,
    pub right_foot_traj: PiecewisePolynomial,
    /// Two channels: x, y.
    pub zmp_ref: PiecewisePolynomial,
    /// Pelvis height held throughout, m.
    pub pelvis_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitPlan {
    pub params: GaitParams,
    pub footsteps: Vec<Footstep>,
    pub phases: Vec<PhaseInterval>,
    pub pelvis_traj: PiecewisePolynomial,
    pub left_foot_traj: PiecewisePolynomial,
    pub right_foot_traj: PiecewisePolynomial,
    pub zmp_ref: PiecewisePolynomial,
}

fn pose_from_channels(v: &[f64]) -> Pose {
    Pose::from_xyz_rpy(
        v[channel::X],
        v[channel::Y],
        v[channel::Z],
        v[channel::ROLL],
        v[channel::PITCH],
        v[channel::YAW],
    )
}

pub(crate) fn pose_channels(p: &Pose) -> [f64; 6] {
    let (r, pi, y) = p.rpy();
    [p.position.x, p.position.y, p.position.z, r, pi, y]
}

/// Shared timeline queries for skeletons and full plans.
pub trait Timeline {
    fn phases(&self) -> &[PhaseInterval];
    fn dt(&self) -> f64;
    fn foot_traj(&self, side: Side) -> &PiecewisePolynomial;

    fn total_ticks(&self) -> usize {
        self.phases().last().map_or(0, |p| p.end_tick)
    }

    fn duration(&self) -> f64 {
        self.total_ticks() as f64 * self.dt()
    }

    /// Index of the interval containing tick `k`; the final tick belongs to
    /// the last interval.
    fn interval_index(&self, tick: usize) -> usize {
        let phases = self.phases();
        let idx = phases.partition_point(|p| p.end_tick <= tick);
        idx.min(phases.len() - 1)
    }

    fn interval_at(&self, tick: usize) -> &PhaseInterval {
        &self.phases()[self.interval_index(tick)]
    }

    fn phase_at_tick(&self, tick: usize) -> Phase {
        self.interval_at(tick).phase
    }

    fn foot_pose(&self, side: Side, t: f64) -> Pose {
        pose_from_channels(&self.foot_traj(side).eval_all(t))
    }
}

impl Timeline for PlanSkeleton {
    fn phases(&self) -> &[PhaseInterval] {
        &self.phases
    }
    fn dt(&self) -> f64 {
        self.params.control_dt
    }
    fn foot_traj(&self, side: Side) -> &PiecewisePolynomial {
        match side {
            Side::Left => &self.left_foot_traj,
            Side::Right => &self.right_foot_traj,
        }
    }
}

impl Timeline for GaitPlan {
    fn phases(&self) -> &[PhaseInterval] {
        &self.phases
    }
    fn dt(&self) -> f64 {
        self.params.control_dt
    }
    fn foot_traj(&self, side: Side) -> &PiecewisePolynomial {
        match side {
            Side::Left => &self.left_foot_traj,
            Side::Right => &self.right_foot_traj,
        }
    }
}

impl GaitPlan {
    pub fn from_skeleton(sk: PlanSkeleton, pelvis_traj: PiecewisePolynomial) -> Self {
        Self {
            params: sk.params,
            footsteps: sk.footsteps,
            phases: sk.phases,
            pelvis_traj,
            left_foot_traj: sk.left_foot_traj,
            right_foot_traj: sk.right_foot_traj,
            zmp_ref: sk.zmp_ref,
        }
    }

    pub fn pelvis_pose(&self, t: f64) -> Pose {
        pose_from_channels(&self.pelvis_traj.eval_all(t))
    }

    pub fn zmp_ref_at(&self, t: f64) -> ZmpPoint {
        ZmpPoint {
            x: self.zmp_ref.eval(t, 0),
            y: self.zmp_ref.eval(t, 1),
        }
    }

    /// Number of swings (SS intervals).
    pub fn swing_count(&self) -> usize {
        self.phases.iter().filter(|p| p.phase.is_single()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serialises")
    }
}

/// Builds the phase timeline, foot trajectories and ZMP reference.
pub fn plan_skeleton(
    params: &GaitParams,
    model: &RobotModel,
    start_pose: &Pose,
) -> Result<PlanSkeleton, PlanError> {
    params.validate(model)?;
    let dt = params.control_dt;
    let footsteps = plan_footsteps(params, start_pose);
    let n_swings = footsteps.len() - 2;

    // durations in ticks
    let t_ss = ticks_of(params.t_ss, dt, "t_ss")?;
    let t_ds = ticks_of(params.t_ds, dt, "t_ds")?;
    let t_init = ticks_of(params.t_init, dt, "t_init")?;
    let t_final = ticks_of(params.t_final, dt, "t_final")?;

    let mut phases = Vec::new();
    let mut tick = 0usize;
    let mut push = |phase: Phase, len: usize, target: Option<usize>, tick: &mut usize| {
        phases.push(PhaseInterval {
            phase,
            start_tick: *tick,
            end_tick: *tick + len,
            start: *tick as f64 * dt,
            end: (*tick + len) as f64 * dt,
            target,
        });
        *tick += len;
    };
    if n_swings == 0 {
        push(Phase::DoubleSupport, t_init + t_final, None, &mut tick);
    } else {
        push(Phase::DoubleSupport, t_init, None, &mut tick);
        for j in 0..n_swings {
            let swing = footsteps[2 + j].side;
            push(
                Phase::SingleSupport {
                    support: swing.other(),
                },
                t_ss,
                Some(2 + j),
                &mut tick,
            );
            let ds = if j + 1 == n_swings { t_final } else { t_ds };
            push(Phase::DoubleSupport, ds, None, &mut tick);
        }
    }

    // foot trajectories
    let mut current = [footsteps[0].pose, footsteps[1].pose];
    let mut segs: [Vec<PolySegment>; 2] = [Vec::new(), Vec::new()];
    for iv in &phases {
        for side in [Side::Left, Side::Right] {
            let k = side as usize;
            let swinging = iv.phase.swing() == Some(side);
            if swinging {
                let target = footsteps[iv.target.expect("SS has target")].pose;
                let sw = generate_swing_trajectory(
                    &current[k],
                    &target,
                    iv.end - iv.start,
                    params.step_height,
                    iv.start,
                )?;
                segs[k].extend(sw.segments().iter().cloned());
                current[k] = target;
            } else {
                segs[k].push(PolySegment::constant(
                    iv.start,
                    iv.end,
                    &pose_channels(&current[k]),
                ));
            }
        }
    }
    let [ls, rs] = segs;
    let left_foot_traj = PiecewisePolynomial::new(ls)?;
    let right_foot_traj = PiecewisePolynomial::new(rs)?;

    // ZMP reference
    let center = |p: &Pose| [p.position.x, p.position.y];
    let mid = |a: &Pose, b: &Pose| {
        [
            (a.position.x + b.position.x) / 2.0,
            (a.position.y + b.position.y) / 2.0,
        ]
    };
    let mut zsegs = Vec::new();
    let mut feet = [footsteps[0].pose, footsteps[1].pose];
    let mut from = mid(&feet[0], &feet[1]);
    for (i, iv) in phases.iter().enumerate() {
        match iv.phase {
            Phase::SingleSupport { support } => {
                let c = center(&feet[support as usize]);
                zsegs.push(PolySegment::constant(iv.start, iv.end, &c));
                let target = &footsteps[iv.target.unwrap()];
                feet[target.side as usize] = target.pose;
                from = c;
            }
            Phase::DoubleSupport => {
                let to = match phases.get(i + 1) {
                    Some(PhaseInterval {
                        phase: Phase::SingleSupport { support },
                        ..
                    }) => center(&feet[*support as usize]),
                    _ => mid(&feet[0], &feet[1]),
                };
                let d = iv.end - iv.start;
                zsegs.push(PolySegment::new(
                    iv.start,
                    iv.end,
                    vec![
                        vec![from[0], (to[0] - from[0]) / d],
                        vec![from[1], (to[1] - from[1]) / d],
                    ],
                ));
                from = to;
            }
        }
    }
    let zmp_ref = PiecewisePolynomial::new(zsegs)?;

    Ok(PlanSkeleton {
        params: params.clone(),
        footsteps,
        phases,
        left_foot_traj,
        right_foot_traj,
        zmp_ref,
        pelvis_height: start_pose.position.z + model.com_height_nominal,
    })
}

/// Full plan starting at the world origin with default pelvis fitting.
pub fn plan_gait(params: &GaitParams, model: &RobotModel) -> Result<GaitPlan, PlanError> {
    let sk = plan_skeleton(params, model, &Pose::identity())?;
    let fit = optimize_pelvis_trajectory(&sk, model, &PelvisOptions::default())?;
    Ok(GaitPlan::from_skeleton(sk, fit.trajectory))
}

/// IK at every control tick, checking joint ranges, the straight-knee margin
/// and actuator speed limits.
pub fn joint_trajectories(
    plan: &GaitPlan,
    model: &RobotModel,
) -> Result<Vec<(LegJointVector, LegJointVector)>, PlanError> {
    let dt = plan.params.control_dt;
    let reach = model.leg.thigh_length + model.leg.shank_length;
    let mut out: Vec<(LegJointVector, LegJointVector)> = Vec::with_capacity(plan.total_ticks() + 1);
    for tick in 0..=plan.total_ticks() {
        let t = tick as f64 * dt;
        let pelvis = plan.pelvis_pose(t);
        let mut pair = [
            LegJointVector::zeros(Side::Left),
            LegJointVector::zeros(Side::Right),
        ];
        for side in [Side::Left, Side::Right] {
            let sole = plan.foot_pose(side, t);
            let q = inverse_leg(&pelvis, &sole, side, model)
                .map_err(|source| PlanError::Infeasible { tick, t, source })?;
            let frames = crate::kinematics::leg_frames(&q, model);
            if (frames.hip - frames.ankle).norm() > reach - EXTENSION_MARGIN {
                return Err(PlanError::Overextended {
                    tick,
                    margin: EXTENSION_MARGIN,
                });
            }
            pair[side as usize] = q;
        }
        if let Some((pl, pr)) = out.last() {
            for (prev, cur) in [(pl, &pair[0]), (pr, &pair[1])] {
                for (i, lj) in LegJoint::ALL.iter().enumerate() {
                    let spec = model.leg_joint(cur.side, *lj);
                    let speed = (cur.angles[i] - prev.angles[i]).abs() / dt;
                    if speed > spec.max_speed {
                        return Err(PlanError::SpeedLimit {
                            tick,
                            joint: spec.name.clone(),
                            speed,
                            max: spec.max_speed,
                        });
                    }
                }
            }
        }
        out.push((pair[0], pair[1]));
    }
    Ok(out)
}
