//! Parameter sweeps over a base scenario, run in parallel.
//!
//! Every cell reuses the base seed so that cells differing in one parameter
//! form paired comparisons. Rows are sorted by cell key, so the output does
//! not depend on execution order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::model::RobotModel;
use crate::scenario::{ScenarioConfig, ScenarioError};
use crate::sim::{run_episode, SlopeFeature, StepFeature};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    /// Tip errors, m. Zero disables deflection.
    pub deflection: Vec<f64>,
    pub adaptation: Vec<bool>,
    /// Heights of a box obstacle placed at `obstacle`, m.
    pub obstacle_height: Vec<f64>,
    pub slope_deg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for ObstacleRegion {
    fn default() -> Self {
        Self {
            x_min: 0.36,
            x_max: 0.64,
            y_min: 0.0,
            y_max: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub grid: SweepGrid,
    pub obstacle: ObstacleRegion,
    /// Where swept slopes begin, m.
    pub slope_start: f64,
    /// Where swept slopes level off, m.
    pub slope_end: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            grid: SweepGrid::default(),
            obstacle: ObstacleRegion::default(),
            slope_start: 0.2,
            slope_end: 10.0,
        }
    }
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map_or((0, 0), |s| crate::model::line_col(text, s.start));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })
    }

    /// Cartesian product of the grid axes; an empty axis keeps the base value.
    pub fn cells(&self) -> Vec<SweepCell> {
        fn axis<T: Copy>(v: &[T]) -> Vec<Option<T>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        }
        let mut out = Vec::new();
        for d in axis(&self.grid.deflection) {
            for a in axis(&self.grid.adaptation) {
                for h in axis(&self.grid.obstacle_height) {
                    for s in axis(&self.grid.slope_deg) {
                        out.push(SweepCell {
                            deflection: d,
                            adaptation: a,
                            obstacle_height: h,
                            slope_deg: s,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, base: &ScenarioConfig, cell: &SweepCell) -> ScenarioConfig {
        let mut sc = base.clone();
        if let Some(e) = cell.deflection {
            sc.set_tip_error(e);
        }
        if let Some(a) = cell.adaptation {
            sc.controller.adaptation = a;
        }
        if let Some(h) = cell.obstacle_height.filter(|h| *h != 0.0) {
            let r = &self.obstacle;
            sc.terrain.steps.push(StepFeature {
                x_min: r.x_min,
                x_max: r.x_max,
                y_min: r.y_min,
                y_max: r.y_max,
                height: h,
            });
        }
        if let Some(s) = cell.slope_deg.filter(|s| *s != 0.0) {
            sc.terrain.slopes.push(SlopeFeature {
                x_start: self.slope_start,
                x_end: self.slope_end,
                y_min: f64::NEG_INFINITY,
                y_max: f64::INFINITY,
                angle_deg: s,
            });
        }
        sc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub deflection: Option<f64>,
    pub adaptation: Option<bool>,
    pub obstacle_height: Option<f64>,
    pub slope_deg: Option<f64>,
}

impl SweepCell {
    fn key_cmp(&self, other: &Self) -> Ordering {
        fn f(a: Option<f64>, b: Option<f64>) -> Ordering {
            a.unwrap_or(f64::NEG_INFINITY)
                .total_cmp(&b.unwrap_or(f64::NEG_INFINITY))
        }
        f(self.deflection, other.deflection)
            .then(self.adaptation.cmp(&other.adaptation))
            .then(f(self.obstacle_height, other.obstacle_height))
            .then(f(self.slope_deg, other.slope_deg))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub cell: SweepCell,
    pub success: bool,
    pub max_impact_speed: f64,
    pub steps_completed: usize,
    pub guard_triggers: usize,
    /// Planning or episode failure description.
    pub failure: Option<String>,
    /// True when the cell could not be planned.
    pub plan_error: bool,
}

pub fn run_sweep(base: &ScenarioConfig, spec: &SweepSpec, model: &RobotModel) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = spec
        .cells()
        .par_iter()
        .map(|cell| {
            let sc = spec.apply(base, cell);
            match run_episode(&sc, model) {
                Ok(ep) => SweepRow {
                    cell: *cell,
                    success: ep.metrics.success,
                    max_impact_speed: ep.metrics.max_impact_speed,
                    steps_completed: ep.metrics.steps_completed,
                    guard_triggers: ep.metrics.guard_triggers,
                    failure: ep.metrics.failure,
                    plan_error: false,
                },
                Err(e) => SweepRow {
                    cell: *cell,
                    success: false,
                    max_impact_speed: f64::NAN,
                    steps_completed: 0,
                    guard_triggers: 0,
                    failure: Some(e.to_string()),
                    plan_error: true,
                },
            }
        })
        .collect();
    rows.sort_by(|a, b| a.cell.key_cmp(&b.cell));
    rows
}

pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "deflection,adaptation,obstacle_height,slope_deg,success,max_impact_speed,steps_completed,guard_triggers,failure\n",
    );
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x}"));
    for r in rows {
        let adaptation = r
            .cell
            .adaptation
            .map_or("-", |a| if a { "on" } else { "off" });
        let failure = r
            .failure
            .as_deref()
            .unwrap_or("-")
            .replace([',', '\n'], ";");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.8e},{},{},{}",
            opt(r.cell.deflection),
            adaptation,
            opt(r.cell.obstacle_height),
            opt(r.cell.slope_deg),
            r.success,
            r.max_impact_speed,
            r.steps_completed,
            r.guard_triggers,
            failure
        );
    }
    out
}
