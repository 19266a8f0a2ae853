//! Per-tick simulation records and their line-delimited CSV form.
//!
//! Floats are written with nine significant digits. A trace file carries
//! everything needed to recompute the episode metrics; see
//! [`verify_metrics`].

use serde::{Deserialize, Serialize};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

use crate::kinematics::{LegJoint, Side};
use crate::planner::{Phase, ZmpPoint};
use crate::sensor::{ProbeReading, SensorFeedback};
use crate::sim::ImpactMetrics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    SsEnter,
    DsEnter,
    Touchdown,
    Guard,
    ClampPitch,
    ClampRoll,
    SettleSnap,
    StepFailure,
    IkFailure,
    ContactViolation,
}

impl Event {
    pub const ALL: [Event; 10] = [
        Event::SsEnter,
        Event::DsEnter,
        Event::Touchdown,
        Event::Guard,
        Event::ClampPitch,
        Event::ClampRoll,
        Event::SettleSnap,
        Event::StepFailure,
        Event::IkFailure,
        Event::ContactViolation,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Event::SsEnter => "ss_enter",
            Event::DsEnter => "ds_enter",
            Event::Touchdown => "touchdown",
            Event::Guard => "guard",
            Event::ClampPitch => "clamp_pitch",
            Event::ClampRoll => "clamp_roll",
            Event::SettleSnap => "settle_snap",
            Event::StepFailure => "step_failure",
            Event::IkFailure => "ik_failure",
            Event::ContactViolation => "contact_violation",
        }
    }

    /// Events that end an episode as failed.
    pub fn is_failure(self) -> bool {
        matches!(
            self,
            Event::StepFailure | Event::IkFailure | Event::ContactViolation
        )
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Event {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Event::ALL
            .iter()
            .find(|e| e.token() == s)
            .copied()
            .ok_or_else(|| format!("unknown event '{s}'"))
    }
}

/// One control tick. Sole poses, probe values and ankle commands refer to
/// `foot`: the swing foot in SS, the most recently landed foot in DS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: usize,
    pub t: f64,
    pub phase: Phase,
    pub plan_phase: Phase,
    pub foot: Side,
    /// Commanded joints, left then right.
    pub joints: [[f64; 6]; 2],
    /// x, y, z, roll, pitch, yaw.
    pub cmd: [f64; 6],
    pub true_pose: [f64; 6],
    /// Vertical sole speed over the last tick; at touchdown, just before contact.
    pub vz: f64,
    pub reading: ProbeReading,
    pub feedback: SensorFeedback,
    pub phi_ce: f64,
    pub alpha_ce: f64,
    pub phi_input: f64,
    pub alpha_input: f64,
    pub zmp: ZmpPoint,
    pub events: Vec<Event>,
}

impl TraceRecord {
    pub fn has(&self, e: Event) -> bool {
        self.events.contains(&e)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimTrace {
    pub dt: f64,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace header does not match the expected columns")]
    Header,
    #[error("trace line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("trace is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const POSE_SUFFIXES: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

pub fn header() -> Vec<String> {
    let mut cols: Vec<String> = ["tick", "t", "phase", "plan_phase", "foot"]
        .map(String::from)
        .to_vec();
    for side in [Side::Left, Side::Right] {
        for j in LegJoint::ALL {
            cols.push(format!("{}_{}", side.letter().to_lowercase(), j.suffix()));
        }
    }
    for prefix in ["cmd", "true"] {
        for s in POSE_SUFFIXES {
            cols.push(format!("{prefix}_{s}"));
        }
    }
    cols.extend(
        [
            "vz",
            "d_a",
            "d_b",
            "d_c",
            "d_d",
            "in_range",
            "d_avg",
            "phi_avg",
            "alpha_avg",
            "phi_ce",
            "alpha_ce",
            "phi_input",
            "alpha_input",
            "zmp_x",
            "zmp_y",
            "event",
        ]
        .map(String::from),
    );
    cols
}

fn push_f(line: &mut String, v: f64) {
    let _ = write!(line, ",{v:.8e}");
}

impl SimTrace {
    pub fn to_csv(&self) -> String {
        let mut out = header().join(",");
        out.push('\n');
        for r in &self.records {
            let mut line = format!(
                "{},{:.8e},{},{},{}",
                r.tick,
                r.t,
                r.phase,
                r.plan_phase,
                r.foot.letter()
            );
            for v in r.joints.iter().flatten() {
                push_f(&mut line, *v);
            }
            for v in r.cmd.iter().chain(r.true_pose.iter()) {
                push_f(&mut line, *v);
            }
            push_f(&mut line, r.vz);
            for v in r.reading.distance {
                push_f(&mut line, v);
            }
            line.push(',');
            for ok in r.reading.in_range {
                line.push(if ok { '1' } else { '0' });
            }
            for v in [
                r.feedback.d_avg,
                r.feedback.phi_avg,
                r.feedback.alpha_avg,
                r.phi_ce,
                r.alpha_ce,
                r.phi_input,
                r.alpha_input,
                r.zmp.x,
                r.zmp.y,
            ] {
                push_f(&mut line, v);
            }
            line.push(',');
            if r.events.is_empty() {
                line.push('-');
            } else {
                let tokens: Vec<&str> = r.events.iter().map(|e| e.token()).collect();
                line.push_str(&tokens.join(";"));
            }
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TraceError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        Self::parse_csv(&std::fs::read_to_string(path)?)
    }

    /// Parses a trace written by [`SimTrace::to_csv`]. The control period is
    /// recovered from the first two rows.
    pub fn parse_csv(text: &str) -> Result<Self, TraceError> {
        let mut lines = text.lines();
        let head = lines.next().ok_or(TraceError::Empty)?;
        if head.split(',').map(str::to_string).collect::<Vec<_>>() != header() {
            return Err(TraceError::Header);
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec = parse_row(line).map_err(|message| TraceError::Row {
                line: i + 2,
                message,
            })?;
            records.push(rec);
        }
        let dt = match records.as_slice() {
            [a, b, ..] => (b.t - a.t) / (b.tick - a.tick) as f64,
            _ => crate::CONTROL_DT,
        };
        Ok(Self { dt, records })
    }

    pub fn duration(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.t)
    }

    /// Ticks consecutive from zero with `t == tick · dt` exactly.
    pub fn timing_is_exact(&self, dt: f64) -> bool {
        self.records
            .iter()
            .enumerate()
            .all(|(i, r)| r.tick == i && r.t == i as f64 * dt)
    }
}

fn parse_row(line: &str) -> Result<TraceRecord, String> {
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != header().len() {
        return Err(format!(
            "expected {} fields, found {}",
            header().len(),
            f.len()
        ));
    }
    let num = |i: usize| -> Result<f64, String> {
        f[i].parse::<f64>()
            .map_err(|_| format!("field {i} '{}' is not a number", f[i]))
    };
    let phase =
        |i: usize| Phase::from_label(f[i]).ok_or_else(|| format!("unknown phase '{}'", f[i]));
    let foot = match f[4] {
        "L" => Side::Left,
        "R" => Side::Right,
        other => return Err(format!("unknown foot '{other}'")),
    };
    let tick = f[0]
        .parse::<usize>()
        .map_err(|_| format!("bad tick '{}'", f[0]))?;
    let mut joints = [[0.0; 6]; 2];
    for (k, v) in joints.iter_mut().flatten().enumerate() {
        *v = num(5 + k)?;
    }
    let mut cmd = [0.0; 6];
    let mut true_pose = [0.0; 6];
    for k in 0..6 {
        cmd[k] = num(17 + k)?;
        true_pose[k] = num(23 + k)?;
    }
    let vz = num(29)?;
    let mut distance = [0.0; 4];
    for (k, d) in distance.iter_mut().enumerate() {
        *d = num(30 + k)?;
    }
    let flags: Vec<char> = f[34].chars().collect();
    if flags.len() != 4 || flags.iter().any(|c| *c != '0' && *c != '1') {
        return Err(format!("bad in_range flags '{}'", f[34]));
    }
    let in_range = [
        flags[0] == '1',
        flags[1] == '1',
        flags[2] == '1',
        flags[3] == '1',
    ];
    let events = if f[44] == "-" {
        Vec::new()
    } else {
        f[44]
            .split(';')
            .map(Event::from_str)
            .collect::<Result<Vec<_>, _>>()?
    };
    let t = num(1)?;
    Ok(TraceRecord {
        tick,
        t,
        phase: phase(2)?,
        plan_phase: phase(3)?,
        foot,
        joints,
        cmd,
        true_pose,
        vz,
        reading: ProbeReading {
            distance,
            in_range,
            timestamp: t,
        },
        feedback: SensorFeedback {
            d_avg: num(35)?,
            phi_avg: num(36)?,
            alpha_avg: num(37)?,
            all_in_range: in_range.iter().all(|v| *v),
        },
        phi_ce: num(38)?,
        alpha_ce: num(39)?,
        phi_input: num(40)?,
        alpha_input: num(41)?,
        zmp: ZmpPoint {
            x: num(42)?,
            y: num(43)?,
        },
        events,
    })
}

/// Recomputes the metrics from a trace and compares them with `claimed`,
/// allowing for the nine-digit float formatting.
pub fn verify_metrics(trace: &SimTrace, claimed: &ImpactMetrics) -> Result<(), String> {
    let again = ImpactMetrics::from_records(&trace.records, claimed.fail_threshold);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-7 * a.abs().max(b.abs()).max(1e-6);
    let mismatch = |what: &str| {
        Err(format!(
            "recomputed {what} differs from the metrics summary"
        ))
    };
    if again.success != claimed.success {
        return mismatch("success flag");
    }
    if again.steps_completed != claimed.steps_completed {
        return mismatch("steps completed");
    }
    if again.guard_triggers != claimed.guard_triggers {
        return mismatch("guard trigger count");
    }
    if !close(again.max_impact_speed, claimed.max_impact_speed) {
        return mismatch("max impact speed");
    }
    if again.steps.len() != claimed.steps.len() {
        return mismatch("step count");
    }
    for (a, b) in again.steps.iter().zip(&claimed.steps) {
        let same = a.side == b.side
            && a.touchdown_tick == b.touchdown_tick
            && a.early_contact == b.early_contact
            && a.guard_triggered == b.guard_triggered
            && a.snapped == b.snapped
            && close(a.impact_speed, b.impact_speed)
            && close(a.pitch_misalignment, b.pitch_misalignment)
            && close(a.roll_misalignment, b.roll_misalignment)
            && close(a.phi_ce_at_touchdown, b.phi_ce_at_touchdown)
            && close(a.alpha_ce_at_touchdown, b.alpha_ce_at_touchdown);
        if !same {
            return mismatch(&format!("step {}", a.index));
        }
    }
    Ok(())
}
