//! Kinematic plant and the 200 Hz episode loop.
//!
//! Each tick evaluates the plan, applies the ankle command and height
//! override to the swing foot, solves IK for the commanded joints, perturbs
//! the swing sole by the deflection model, detects contact, reads the probes
//! and updates the controller. Stance feet are rigidly planted where they
//! landed. The plant is deterministic: the seed only drives optional probe
//! noise.

mod deflection;
mod metrics;
mod terrain;

pub use deflection::{apply_deflection, DeflectionMode, DeflectionModel};
pub use metrics::{ImpactMetrics, StepMetrics};
pub use terrain::{SlopeFeature, StepFeature, TerrainMap, MAX_FEATURE_HEIGHT, MAX_SLOPE_DEG};

pub use crate::trace::SimTrace;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controller::{AdaptationState, GuardInput};
use crate::kinematics::{inverse_leg, link_points, LegJointVector, Pose, Side};
use crate::model::RobotModel;
use crate::planner::{
    channel, compute_zmp, generate_swing_trajectory, joint_trajectories,
    optimize_pelvis_trajectory, plan_skeleton, pose_channels, GaitPlan, Phase, PlanError, Timeline,
    ZmpPoint,
};
use crate::poly::PiecewisePolynomial;
use crate::scenario::ScenarioConfig;
use crate::sensor::{add_noise, aggregate, read_probes, ProbeReading, SensorFeedback};
use crate::trace::{Event, TraceRecord};

/// Largest sole gap counted as contact, m.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("invalid scenario: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub plan: GaitPlan,
    pub trace: SimTrace,
    pub metrics: ImpactMetrics,
}

/// Plans the gait for the scenario and runs it to completion or failure.
/// Planning problems are errors; failures during execution are reported in
/// the metrics.
pub fn run_episode(scenario: &ScenarioConfig, model: &RobotModel) -> Result<Episode, SimError> {
    scenario
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let sk = plan_skeleton(&scenario.gait, model, &Pose::identity())?;
    let fit = optimize_pelvis_trajectory(&sk, model, &scenario.pelvis)?;
    let plan = GaitPlan::from_skeleton(sk, fit.trajectory);
    joint_trajectories(&plan, model)?;
    let trace = simulate(&plan, scenario, model);
    let metrics = ImpactMetrics::from_records(&trace.records, scenario.metrics.fail_threshold);
    Ok(Episode {
        plan,
        trace,
        metrics,
    })
}

struct Swing {
    side: Side,
    traj: PiecewisePolynomial,
    start: f64,
    end_tick: usize,
    t_end: f64,
    apex_t: f64,
    z_target: f64,
    /// Planned sole pitch and roll relative to the ground at touchdown.
    landing_attitude: (f64, f64),
    planted: bool,
}

impl Swing {
    /// Fraction of the deflection load carried: rises with the lift-off
    /// motion and is complete at the apex.
    fn engagement(&self, t: f64) -> f64 {
        let s = ((t - self.start) / (self.apex_t - self.start)).clamp(0.0, 1.0);
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

fn pose_of(v: &[f64]) -> Pose {
    Pose::from_xyz_rpy(v[0], v[1], v[2], v[3], v[4], v[5])
}

/// Runs an already planned gait through the plant and controller.
pub fn simulate(plan: &GaitPlan, scenario: &ScenarioConfig, model: &RobotModel) -> SimTrace {
    let params = &plan.params;
    let dt = params.control_dt;
    let cfg = &scenario.controller;
    let terrain = &scenario.terrain;
    let dm = &scenario.deflection;
    let foot = &model.foot;
    let leg_length = model.leg_length();
    let n = plan.total_ticks();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut planted = [
        terrain.conform(&plan.footsteps[0].pose, foot),
        terrain.conform(&plan.footsteps[1].pose, foot),
    ];
    let mut prev_true = planted;
    let mut ctrl = AdaptationState::new();
    let mut swing: Option<Swing> = None;
    let mut last_ss: Option<usize> = None;
    let mut ds_start = 0.0;
    let mut tracked = Side::Left;
    let mut records: Vec<TraceRecord> = Vec::with_capacity(n + 1);
    let mut samples: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(n + 1);
    let mut masses: Vec<f64> = Vec::new();
    let mut last_joints = [
        LegJointVector::zeros(Side::Left),
        LegJointVector::zeros(Side::Right),
    ];

    for k in 0..=n {
        let t = k as f64 * dt;
        let plan_idx = plan.interval_index(k);
        let iv = &plan.phases[plan_idx];
        let mut events = Vec::new();
        let mut abort = false;

        if swing.is_none() && iv.phase.is_single() && last_ss != Some(plan_idx) {
            let side = iv.phase.swing().expect("single support has a swing side");
            let target = plan.footsteps[iv.target.expect("single support has a target")].pose;
            let traj = generate_swing_trajectory(
                &planted[side as usize],
                &target,
                iv.end - iv.start,
                params.step_height,
                iv.start,
            )
            .expect("swing interval has positive duration");
            swing = Some(Swing {
                side,
                traj,
                start: iv.start,
                end_tick: iv.end_tick,
                t_end: iv.end,
                apex_t: (iv.start + iv.end) / 2.0,
                z_target: target.position.z,
                landing_attitude: (target.pitch(), target.roll()),
                planted: false,
            });
            ctrl.enter_ss(side.other());
            events.push(Event::SsEnter);
            last_ss = Some(plan_idx);
            tracked = side;
        }

        let mut cmd = planted;
        let mut truth = planted;
        let mut vz_override: Option<f64> = None;
        let desired: (f64, f64);
        let (mut phi_input, mut alpha_input);

        if let Some(sw) = swing.as_mut() {
            let side = sw.side;
            let planned = sw.traj.eval_all(t);
            desired = (planned[channel::PITCH], planned[channel::ROLL]);
            phi_input = desired.0;
            alpha_input = desired.1;
            if !sw.planted {
                let mut v = planned.clone();
                if let Some(z) = ctrl.z_override(t) {
                    v[channel::Z] = z;
                }
                if cfg.adaptation {
                    let c = ctrl.ankle_command(desired, side, model, t);
                    if c.clamped_pitch {
                        events.push(Event::ClampPitch);
                    }
                    if c.clamped_roll {
                        events.push(Event::ClampRoll);
                    }
                    v[channel::PITCH] = c.phi_input;
                    v[channel::ROLL] = c.alpha_input;
                    phi_input = c.phi_input;
                    alpha_input = c.alpha_input;
                }
                let commanded = pose_of(&v);
                let stance_x = planted[side.other() as usize].position.x;
                let extension = if params.step_length > 0.0 {
                    (commanded.position.x - stance_x).abs() / params.step_length
                } else {
                    1.0
                };
                let free = apply_deflection(
                    &commanded,
                    side,
                    sw.engagement(t),
                    extension,
                    dm,
                    leg_length,
                );
                cmd[side as usize] = commanded;
                truth[side as usize] = free;
                if t >= sw.apex_t && terrain.min_gap(&free, foot) <= CONTACT_TOLERANCE {
                    let landed = terrain.conform(&free, foot);
                    vz_override =
                        Some((free.position.z - prev_true[side as usize].position.z) / dt);
                    planted[side as usize] = landed;
                    truth[side as usize] = landed;
                    sw.planted = true;
                    events.push(Event::Touchdown);
                }
            }
        } else {
            let p = plan.foot_pose(tracked, t);
            desired = (p.pitch(), p.roll());
            phi_input = desired.0 + ctrl.phi_ce;
            alpha_input = desired.1 + ctrl.alpha_ce;
        }

        // commanded joints
        let pelvis = plan.pelvis_pose(t);
        let mut joints = last_joints;
        for side in [Side::Left, Side::Right] {
            match inverse_leg(&pelvis, &cmd[side as usize], side, model) {
                Ok(q) => joints[side as usize] = q,
                Err(e) => {
                    log::warn!("IK failure at tick {k}: {e}");
                    events.push(Event::IkFailure);
                    abort = true;
                }
            }
        }

        // sensing
        let ti = tracked as usize;
        let mut reading = ProbeReading::from_gaps([foot.sensor_range; 4], foot.sensor_range, t);
        match read_probes(&truth[ti], terrain, foot, t) {
            Ok(r) => reading = add_noise(&r, foot.sensor_range, cfg.noise_amplitude, &mut rng),
            Err(e) => {
                log::warn!("tick {k}: {e}");
                events.push(Event::ContactViolation);
                abort = true;
            }
        }
        let fb: SensorFeedback = aggregate(&reading, foot);
        let vz = vz_override.unwrap_or((truth[ti].position.z - prev_true[ti].position.z) / dt);

        // control and phase transitions
        if let Some(sw) = swing.as_mut() {
            let armed = t >= sw.apex_t;
            if cfg.adaptation && !sw.planted && !abort {
                if armed
                    && ctrl
                        .update_cumulative(sw.landing_attitude, &fb, cfg.leak)
                        .is_err()
                {
                    events.push(Event::StepFailure);
                    abort = true;
                }
                if cfg.guard_active() {
                    ctrl.observe_ground(cmd[sw.side as usize].position.z, &fb, dt);
                    let g = GuardInput {
                        t,
                        dt,
                        t_touchdown: sw.t_end,
                        z_cmd: cmd[sw.side as usize].position.z,
                        vz_plan: sw.traj.derivative(t, channel::Z, 1),
                        z_plan: sw.traj.eval(t, channel::Z),
                        z_target_plan: sw.z_target,
                        armed,
                    };
                    if ctrl.landing_guard(&fb, &g, foot.sensor_range, cfg) {
                        events.push(Event::Guard);
                    } else {
                        ctrl.track_descent(&fb, t, dt, cfg);
                    }
                }
            }
            let settled = sw.planted
                && ctrl.guard_triggered
                && fb.d_avg <= cfg.settle_epsilon
                && vz.abs() <= cfg.v_contact;
            let mut finish = settled || (sw.planted && k >= sw.end_tick);
            if !sw.planted && k >= sw.end_tick {
                let overdue = t - sw.t_end >= cfg.max_extension - 1e-12;
                if !ctrl.guard_triggered || overdue {
                    if ctrl.guard_triggered {
                        events.push(Event::StepFailure);
                    }
                    let side = sw.side as usize;
                    let landed = terrain.conform(&truth[side], foot);
                    planted[side] = landed;
                    truth[side] = landed;
                    sw.planted = true;
                    events.push(Event::SettleSnap);
                    events.push(Event::Touchdown);
                    finish = true;
                }
            }
            if finish {
                swing = None;
                ctrl.enter_ds();
                ds_start = t;
                events.push(Event::DsEnter);
            }
        }
        if swing.is_none() {
            let last_ds_tick =
                k == n || (!iv.phase.is_single() && plan.phase_at_tick(k + 1).is_single());
            if last_ds_tick {
                ctrl.finish_reset();
            } else {
                ctrl.ds_reset(t - ds_start, cfg.ds_reset_fraction * params.t_ds);
            }
            if !events.contains(&Event::Touchdown) {
                phi_input = desired.0 + ctrl.phi_ce;
                alpha_input = desired.1 + ctrl.alpha_ce;
            }
        }

        let phase = match &swing {
            Some(sw) => Phase::SingleSupport {
                support: sw.side.other(),
            },
            None => Phase::DoubleSupport,
        };
        let pts = link_points(&joints[0], &joints[1], &pelvis, model);
        if masses.is_empty() {
            masses = pts.iter().map(|(m, _)| *m).collect();
        }
        samples.push(pts.iter().map(|(_, p)| *p).collect());
        records.push(TraceRecord {
            tick: k,
            t,
            phase,
            plan_phase: iv.phase,
            foot: tracked,
            joints: [joints[0].angles, joints[1].angles],
            cmd: pose_channels(&cmd[ti]),
            true_pose: pose_channels(&truth[ti]),
            vz,
            reading,
            feedback: fb,
            phi_ce: ctrl.phi_ce,
            alpha_ce: ctrl.alpha_ce,
            phi_input,
            alpha_input,
            zmp: ZmpPoint { x: 0.0, y: 0.0 },
            events,
        });
        prev_true = truth;
        last_joints = joints;
        if abort {
            break;
        }
    }

    if let Ok(z) = compute_zmp(&samples, &masses, dt) {
        for (r, p) in records.iter_mut().zip(z) {
            r.zmp = p;
        }
    }
    SimTrace { dt, records }
}
