use serde::{Deserialize, Serialize};

use crate::kinematics::Side;
use crate::trace::{Event, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub index: usize,
    pub side: Side,
    pub touchdown_tick: Option<usize>,
    /// Vertical sole speed just before contact, m/s.
    pub impact_speed: f64,
    /// Sole pitch change over the touchdown tick, rad.
    pub pitch_misalignment: f64,
    pub roll_misalignment: f64,
    /// Contact before the planned touchdown time.
    pub early_contact: bool,
    pub guard_triggered: bool,
    /// Contact forced at the end of the swing window.
    pub snapped: bool,
    pub phi_ce_at_touchdown: f64,
    pub alpha_ce_at_touchdown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactMetrics {
    pub steps: Vec<StepMetrics>,
    pub success: bool,
    pub max_impact_speed: f64,
    pub steps_completed: usize,
    pub guard_triggers: usize,
    /// Impact speed above which a touchdown counts as a severe collision, m/s.
    pub fail_threshold: f64,
    pub failure: Option<String>,
}

impl ImpactMetrics {
    /// Derives all metrics from the per-tick records alone.
    pub fn from_records(records: &[TraceRecord], fail_threshold: f64) -> Self {
        let mut steps: Vec<StepMetrics> = Vec::new();
        let mut failure: Option<String> = None;
        for (k, r) in records.iter().enumerate() {
            for e in &r.events {
                match e {
                    Event::SsEnter => steps.push(StepMetrics {
                        index: steps.len(),
                        side: r.foot,
                        touchdown_tick: None,
                        impact_speed: 0.0,
                        pitch_misalignment: 0.0,
                        roll_misalignment: 0.0,
                        early_contact: false,
                        guard_triggered: false,
                        snapped: false,
                        phi_ce_at_touchdown: 0.0,
                        alpha_ce_at_touchdown: 0.0,
                    }),
                    Event::Guard => {
                        if let Some(s) = steps.last_mut() {
                            s.guard_triggered = true;
                        }
                    }
                    Event::SettleSnap => {
                        if let Some(s) = steps.last_mut() {
                            s.snapped = true;
                        }
                    }
                    Event::Touchdown => {
                        if let Some(s) = steps.last_mut() {
                            let prev = &records[k.saturating_sub(1)];
                            s.touchdown_tick = Some(r.tick);
                            s.impact_speed = r.vz.abs();
                            s.pitch_misalignment = (r.true_pose[4] - prev.true_pose[4]).abs();
                            s.roll_misalignment = (r.true_pose[3] - prev.true_pose[3]).abs();
                            s.early_contact = r.plan_phase.is_single();
                            s.phi_ce_at_touchdown = r.phi_ce;
                            s.alpha_ce_at_touchdown = r.alpha_ce;
                        }
                    }
                    e if e.is_failure() && failure.is_none() => {
                        failure = Some(format!("{e} at tick {}", r.tick));
                    }
                    _ => {}
                }
            }
        }
        let max_impact_speed = steps.iter().map(|s| s.impact_speed).fold(0.0, f64::max);
        let steps_completed = steps.iter().filter(|s| s.touchdown_tick.is_some()).count();
        let guard_triggers = steps.iter().filter(|s| s.guard_triggered).count();
        if failure.is_none() {
            if let Some(s) = steps.iter().find(|s| s.touchdown_tick.is_none()) {
                failure = Some(format!("step {} never touched down", s.index));
            } else if let Some(s) = steps.iter().find(|s| s.impact_speed > fail_threshold) {
                failure = Some(format!(
                    "step {} touched down at {:.4} m/s, above {:.4} m/s",
                    s.index, s.impact_speed, fail_threshold
                ));
            }
        }
        Self {
            success: failure.is_none(),
            steps,
            max_impact_speed,
            steps_completed,
            guard_triggers,
            fail_threshold,
            failure,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
