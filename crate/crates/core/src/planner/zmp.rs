use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{inverse_leg_unchecked, link_points, Side};
use crate::model::RobotModel;
use crate::GRAVITY;

use super::{GaitPlan, Phase, PlanError, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZmpPoint {
    pub x: f64,
    pub y: f64,
}

/// Multi-link ZMP on flat ground from sampled link CoM positions.
///
/// `samples[k][i]` is the position of link `i` at sample `k`, spaced `dt`
/// apart. Accelerations are central differences; the first and last samples
/// reuse their neighbour's. Rotational inertia is neglected.
pub fn compute_zmp(
    samples: &[Vec<Vector3<f64>>],
    masses: &[f64],
    dt: f64,
) -> Result<Vec<ZmpPoint>, PlanError> {
    let n = samples.len();
    let accel = |k: usize| -> Vec<Vector3<f64>> {
        if n < 3 {
            return vec![Vector3::zeros(); masses.len()];
        }
        let k = k.clamp(1, n - 2);
        (0..masses.len())
            .map(|i| (samples[k + 1][i] - 2.0 * samples[k][i] + samples[k - 1][i]) / (dt * dt))
            .collect()
    };
    (0..n)
        .map(|k| {
            let acc = accel(k);
            let (mut num_x, mut num_y, mut den) = (0.0, 0.0, 0.0);
            for (i, m) in masses.iter().enumerate() {
                let p = samples[k][i];
                let a = acc[i];
                let fz = m * (a.z + GRAVITY);
                num_x += fz * p.x - m * p.z * a.x;
                num_y += fz * p.y - m * p.z * a.y;
                den += fz;
            }
            if den <= 0.0 {
                return Err(PlanError::DynamicInfeasibility { index: k });
            }
            Ok(ZmpPoint {
                x: num_x / den,
                y: num_y / den,
            })
        })
        .collect()
}

/// ZMP of the planned motion at every control tick, through IK and the
/// lumped-mass model.
pub fn planned_zmp(plan: &GaitPlan, model: &RobotModel) -> Result<Vec<ZmpPoint>, PlanError> {
    let dt = plan.params.control_dt;
    let mut samples = Vec::with_capacity(plan.total_ticks() + 1);
    let mut masses = Vec::new();
    for tick in 0..=plan.total_ticks() {
        let t = tick as f64 * dt;
        let pelvis = plan.pelvis_pose(t);
        let solve = |side: Side| {
            inverse_leg_unchecked(&pelvis, &plan.foot_pose(side, t), side, model)
                .map_err(|source| PlanError::Infeasible { tick, t, source })
        };
        let (l, r) = (solve(Side::Left)?, solve(Side::Right)?);
        let pts = link_points(&l, &r, &pelvis, model);
        if masses.is_empty() {
            masses = pts.iter().map(|(m, _)| *m).collect();
        }
        samples.push(pts.iter().map(|(_, p)| *p).collect());
    }
    compute_zmp(&samples, &masses, dt)
}

fn cross(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vector2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

/// Signed distance from `p` to the boundary of a counter-clockwise convex
/// polygon; positive inside.
pub fn polygon_margin(poly: &[Vector2<f64>], p: &Vector2<f64>) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            cross(&a, &b, p) / (b - a).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Support polygon at a tick: the stance sole outline in single support,
/// the hull of both outlines in double support.
pub fn support_polygon(plan: &impl Timeline, model: &RobotModel, tick: usize) -> Vec<Vector2<f64>> {
    let t = tick as f64 * plan.dt();
    let sides: &[Side] = match plan.phase_at_tick(tick) {
        Phase::SingleSupport {
            support: Side::Left,
        } => &[Side::Left],
        Phase::SingleSupport {
            support: Side::Right,
        } => &[Side::Right],
        Phase::DoubleSupport => &[Side::Left, Side::Right],
    };
    let mut pts = Vec::new();
    for side in sides {
        let pose = plan.foot_pose(*side, t);
        for c in model.foot.outline() {
            let w = pose.transform_point(&Vector3::new(c.x, c.y, 0.0));
            pts.push(Vector2::new(w.x, w.y));
        }
    }
    convex_hull(&pts)
}
