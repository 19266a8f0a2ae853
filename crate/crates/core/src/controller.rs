//! Swing-foot ankle adaptation.
//!
//! During single support the relative pitch and roll reported by the foot
//! probes are integrated into cumulative corrections which are added to the
//! planned ankle angles. A landing guard replaces the remaining swing-height
//! trajectory with a slow cubic descent when the ground is sensed earlier
//! than planned. Corrections are ramped to zero early in double support.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{LegJoint, Side};
use crate::model::RobotModel;
use crate::planner::Phase;
use crate::poly::{cubic_hermite, PiecewisePolynomial, PolySegment};
use crate::sensor::SensorFeedback;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Cumulative ankle correction and landing guard.
    pub adaptation: bool,
    /// Landing guard; only effective with `adaptation`.
    pub guard: bool,
    /// Guard threshold as a fraction of the probe range.
    pub guard_fraction: f64,
    /// Planned clearance beyond the threshold required to call a contact early, m.
    pub early_margin: f64,
    /// Correction reset window as a fraction of the planned DS duration.
    pub ds_reset_fraction: f64,
    /// Average probe distance at which the foot counts as settled, m.
    pub settle_epsilon: f64,
    /// Vertical speed below which the foot counts as settled, m/s.
    pub v_contact: f64,
    /// Set-down speed when less than one tick of descent remains, m/s.
    pub v_max_land: f64,
    /// Shortest replanned descent, in control ticks.
    pub min_descent_ticks: usize,
    /// Longest single-support extension while waiting for settled contact, s.
    pub max_extension: f64,
    /// Pause after a guard trigger before descending, s.
    pub hold_duration: f64,
    /// Per-tick decay of the cumulative corrections; 0 integrates exactly.
    pub leak: f64,
    /// Half-width of uniform probe noise, m.
    pub noise_amplitude: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            adaptation: true,
            guard: true,
            guard_fraction: 0.2,
            early_margin: 1e-6,
            ds_reset_fraction: 0.3,
            settle_epsilon: 0.0005,
            v_contact: 0.01,
            v_max_land: 0.02,
            min_descent_ticks: 5,
            max_extension: 0.1,
            hold_duration: 0.0,
            leak: 0.0,
            noise_amplitude: 0.0,
        }
    }
}

impl ControllerConfig {
    pub fn guard_active(&self) -> bool {
        self.adaptation && self.guard
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let checks = [
            (
                "guard_fraction",
                self.guard_fraction > 0.0 && self.guard_fraction < 1.0,
            ),
            ("early_margin", self.early_margin >= 0.0),
            (
                "ds_reset_fraction",
                self.ds_reset_fraction > 0.0 && self.ds_reset_fraction <= 1.0,
            ),
            ("settle_epsilon", self.settle_epsilon >= 0.0),
            ("v_contact", self.v_contact > 0.0),
            ("v_max_land", self.v_max_land > 0.0),
            ("min_descent_ticks", self.min_descent_ticks >= 1),
            ("max_extension", self.max_extension >= 0.0),
            ("hold_duration", self.hold_duration >= 0.0),
            ("leak", (0.0..1.0).contains(&self.leak)),
            ("noise_amplitude", self.noise_amplitude >= 0.0),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((field, _)) => Err(ControllerError::InvalidConfig {
                field: (*field).into(),
            }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("non-finite {what} fed to the controller")]
    NonFinite { what: &'static str },
    #[error("controller parameter `{field}` is out of range")]
    InvalidConfig { field: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnkleCommand {
    pub phi_input: f64,
    pub alpha_input: f64,
    pub z_override: Option<f64>,
    pub clamped_pitch: bool,
    pub clamped_roll: bool,
}

/// Inputs to one landing-guard evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardInput {
    pub t: f64,
    pub dt: f64,
    /// Planned touchdown time of the current swing.
    pub t_touchdown: f64,
    /// Commanded sole height this tick.
    pub z_cmd: f64,
    /// Planned sole vertical velocity this tick.
    pub vz_plan: f64,
    /// Planned sole height this tick.
    pub z_plan: f64,
    /// Planned sole height at touchdown.
    pub z_target_plan: f64,
    /// True once the swing is past its apex.
    pub armed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationState {
    /// Active pitch correction; in DS the decaying residual.
    pub phi_ce: f64,
    pub alpha_ce: f64,
    pub guard_triggered: bool,
    pub guard_trigger_time: Option<f64>,
    pub replanned_z: Option<PiecewisePolynomial>,
    pub phase: Phase,
    pub ds_reset_progress: f64,
    /// Rate at which the sensed ground approaches the sole, m/s.
    pub ground_rate: f64,
    ds_entry: (f64, f64),
    last_gap: Option<(f64, f64)>,
}

impl Default for AdaptationState {
    fn default() -> Self {
        Self::new()
    }
}

impl AdaptationState {
    pub fn new() -> Self {
        Self {
            phi_ce: 0.0,
            alpha_ce: 0.0,
            guard_triggered: false,
            guard_trigger_time: None,
            replanned_z: None,
            phase: Phase::DoubleSupport,
            ds_reset_progress: 1.0,
            ground_rate: 0.0,
            ds_entry: (0.0, 0.0),
            last_gap: None,
        }
    }

    pub fn enter_ss(&mut self, support: Side) {
        self.phase = Phase::SingleSupport { support };
        self.phi_ce = 0.0;
        self.alpha_ce = 0.0;
        self.guard_triggered = false;
        self.guard_trigger_time = None;
        self.replanned_z = None;
        self.ground_rate = 0.0;
        self.last_gap = None;
    }

    pub fn enter_ds(&mut self) {
        self.phase = Phase::DoubleSupport;
        self.ds_entry = (self.phi_ce, self.alpha_ce);
        self.ds_reset_progress = 0.0;
    }

    /// One step of the cumulative-error recurrence. Skipped outside SS and
    /// whenever a probe is saturated; returns whether an update happened.
    pub fn update_cumulative(
        &mut self,
        desired: (f64, f64),
        measured: &SensorFeedback,
        leak: f64,
    ) -> Result<bool, ControllerError> {
        if !(measured.phi_avg.is_finite()
            && measured.alpha_avg.is_finite()
            && measured.d_avg.is_finite())
        {
            return Err(ControllerError::NonFinite {
                what: "sensor feedback",
            });
        }
        if !(desired.0.is_finite() && desired.1.is_finite()) {
            return Err(ControllerError::NonFinite {
                what: "desired angles",
            });
        }
        if !self.phase.is_single() || !measured.all_in_range {
            return Ok(false);
        }
        let keep = 1.0 - leak;
        self.phi_ce = keep * self.phi_ce + (desired.0 - measured.phi_avg);
        self.alpha_ce = keep * self.alpha_ce + (desired.1 - measured.alpha_avg);
        Ok(true)
    }

    /// Desired angles plus the active corrections, clamped to the ankle ranges.
    pub fn ankle_command(
        &self,
        desired: (f64, f64),
        side: Side,
        model: &RobotModel,
        t: f64,
    ) -> AnkleCommand {
        let pitch = model.leg_joint(side, LegJoint::AnklePitch);
        let roll = model.leg_joint(side, LegJoint::AnkleRoll);
        let phi = desired.0 + self.phi_ce;
        let alpha = desired.1 + self.alpha_ce;
        let phi_c = phi.clamp(pitch.range_min, pitch.range_max);
        let alpha_c = alpha.clamp(roll.range_min, roll.range_max);
        AnkleCommand {
            phi_input: phi_c,
            alpha_input: alpha_c,
            z_override: self.z_override(t),
            clamped_pitch: phi_c != phi,
            clamped_roll: alpha_c != alpha,
        }
    }

    pub fn z_override(&self, t: f64) -> Option<f64> {
        self.replanned_z.as_ref().map(|p| p.eval(t, 0))
    }

    /// Tracks how fast the ground under the sole rises, from the change in
    /// sensed gap against the change in commanded height. Saturated
    /// readings reset the estimate.
    pub fn observe_ground(&mut self, z_cmd: f64, fb: &SensorFeedback, dt: f64) {
        if !fb.all_in_range {
            self.last_gap = None;
            self.ground_rate = 0.0;
            return;
        }
        if let Some((z_prev, d_prev)) = self.last_gap {
            self.ground_rate = ((z_cmd - z_prev) - (fb.d_avg - d_prev)) / dt;
        }
        self.last_gap = Some((z_cmd, fb.d_avg));
    }

    /// Replaces the remaining descent with a slow cubic when the ground is
    /// sensed within the threshold while the plan still expects clearance.
    /// Returns whether the guard fired this tick.
    pub fn landing_guard(
        &mut self,
        fb: &SensorFeedback,
        g: &GuardInput,
        sensor_range: f64,
        cfg: &ControllerConfig,
    ) -> bool {
        if self.guard_triggered || !g.armed || !self.phase.is_single() {
            return false;
        }
        let threshold = cfg.guard_fraction * sensor_range;
        let planned_clearance = g.z_plan - g.z_target_plan;
        if fb.d_avg > threshold
            || planned_clearance <= threshold + cfg.early_margin
            || g.t >= g.t_touchdown
        {
            return false;
        }
        self.guard_triggered = true;
        self.guard_trigger_time = Some(g.t);
        let end = g.t + cfg.hold_duration + (g.t_touchdown - g.t);
        let v0 = if cfg.hold_duration > 0.0 {
            0.0
        } else {
            g.vz_plan.min(0.0)
        };
        let rise = self.ground_rate.max(0.0);
        self.replanned_z = Some(replan_descent(
            g.t,
            g.z_cmd,
            v0,
            fb.d_avg,
            rise,
            end,
            g.dt,
            cfg.hold_duration,
            cfg,
        ));
        true
    }

    /// Re-aims a running descent at the ground sensed this tick, so terrain
    /// that rises under a still-travelling foot does not cut the descent
    /// short. Keeps the descent's end time and never lifts the foot.
    /// Returns whether the descent was re-planned.
    pub fn track_descent(
        &mut self,
        fb: &SensorFeedback,
        t: f64,
        dt: f64,
        cfg: &ControllerConfig,
    ) -> bool {
        let (Some(p), Some(t_trigger)) = (self.replanned_z.as_ref(), self.guard_trigger_time)
        else {
            return false;
        };
        if !self.phase.is_single()
            || !fb.all_in_range
            || t < t_trigger + cfg.hold_duration
            || t <= t_trigger
        {
            return false;
        }
        let z0 = p.eval(t, 0);
        let v0 = p.derivative(t, 0, 1).min(0.0);
        let end = p.t_end();
        let rise = self.ground_rate.max(0.0);
        self.replanned_z = Some(replan_descent(t, z0, v0, fb.d_avg, rise, end, dt, 0.0, cfg));
        true
    }

    /// Linear ramp of the DS-entry corrections to exactly zero.
    pub fn ds_reset(&mut self, ds_elapsed: f64, window: f64) {
        let progress = if window > 0.0 {
            (ds_elapsed / window).min(1.0)
        } else {
            1.0
        };
        self.ds_reset_progress = progress;
        if progress >= 1.0 {
            self.phi_ce = 0.0;
            self.alpha_ce = 0.0;
        } else {
            let k = 1.0 - progress;
            self.phi_ce = self.ds_entry.0 * k;
            self.alpha_ce = self.ds_entry.1 * k;
        }
    }

    /// Forces the reset to completion.
    pub fn finish_reset(&mut self) {
        self.ds_reset(1.0, 0.0);
    }
}

/// Cubic from `z0` (moving at `v0`) down to the ground, at rest by `end`.
/// The ground sits `gap` below and rises at `rise`; the target is where it
/// will be when the descent ends. The duration is capped at `3·gap/|v0|`
/// so the height never rises or overshoots; with less than one tick left
/// the foot is lowered linearly at `v_max_land`.
#[allow(clippy::too_many_arguments)]
fn replan_descent(
    t0: f64,
    z0: f64,
    v0: f64,
    gap: f64,
    rise: f64,
    end: f64,
    dt: f64,
    hold: f64,
    cfg: &ControllerConfig,
) -> PiecewisePolynomial {
    let remaining = end - t0 - hold;
    let gap = if remaining < dt {
        gap
    } else if v0 < 0.0 && 3.0 * (gap - rise * remaining) < -v0 * remaining {
        gap / (1.0 + 3.0 * rise / -v0)
    } else {
        gap - rise * remaining
    };
    let z1 = z0 - gap.max(0.0);
    let mut segs = Vec::new();
    let mut t = t0;
    if hold > 0.0 {
        segs.push(PolySegment::constant(t, t + hold, &[z0]));
        t += hold;
    }
    if gap <= 0.0 {
        segs.push(PolySegment::constant(t, t + dt, &[z0]));
    } else if remaining < dt {
        let d = gap / cfg.v_max_land;
        segs.push(PolySegment::new(t, t + d, vec![vec![z0, -cfg.v_max_land]]));
    } else {
        let min_t = cfg.min_descent_ticks as f64 * dt;
        let mut dur = remaining.max(min_t);
        if v0 < 0.0 {
            dur = dur.min(3.0 * gap / -v0);
        }
        segs.push(PolySegment::new(
            t,
            t + dur,
            vec![cubic_hermite(z0, v0, z1, 0.0, dur)],
        ));
    }
    PiecewisePolynomial::new(segs).expect("descent segments are contiguous")
}
