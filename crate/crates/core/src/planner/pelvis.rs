use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::kinematics::{inverse_leg_unchecked, link_points, Pose, Side};
use crate::model::RobotModel;
use crate::poly::{PiecewisePolynomial, PolySegment};
use crate::GRAVITY;

use super::{PlanError, PlanSkeleton, Timeline};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PelvisOptions {
    /// Polynomial degree of each pelvis segment, 3 to 5.
    pub degree: usize,
    /// Re-linearisations of the link model around the previous solution.
    pub refinements: usize,
}

impl Default for PelvisOptions {
    fn default() -> Self {
        Self {
            degree: 5,
            refinements: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PelvisFit {
    /// Six channels: x, y, z, roll, pitch, yaw.
    pub trajectory: PiecewisePolynomial,
    /// Sum over ticks of squared ZMP tracking error (both axes) under the
    /// link model used for the final solve, m².
    pub residual: f64,
}

/// One lumped link at one tick: horizontal position `c * pelvis + e`,
/// height `z`.
#[derive(Debug, Clone, Copy)]
struct LinkSample {
    mass: f64,
    c: f64,
    e: Vector2<f64>,
    z: f64,
}

fn falling(n: usize, k: usize) -> f64 {
    ((n - k + 1)..=n).map(|v| v as f64).product()
}

/// Value at `s` of the `order`-th derivative of `s^n`.
fn basis(n: usize, s: f64, order: usize) -> f64 {
    if order > n {
        0.0
    } else {
        falling(n, order) * s.powi((n - order) as i32)
    }
}

/// Link model with the legs approximated as straight lines from hip to ankle.
fn initial_model(sk: &PlanSkeleton, model: &RobotModel, yaw: f64) -> Vec<Vec<LinkSample>> {
    let leg = &model.leg;
    let m = &model.masses;
    let h = sk.pelvis_height;
    let w_thigh = 0.5 * leg.thigh_length / (leg.thigh_length + leg.shank_length);
    let w_shank =
        (leg.thigh_length + 0.5 * leg.shank_length) / (leg.thigh_length + leg.shank_length);
    let (sy, cy) = yaw.sin_cos();
    (0..=sk.total_ticks())
        .map(|tick| {
            let t = tick as f64 * sk.dt();
            let mut out = vec![LinkSample {
                mass: m.pelvis_torso,
                c: 1.0,
                e: Vector2::zeros(),
                z: h + m.pelvis_com_offset_z,
            }];
            for side in [Side::Left, Side::Right] {
                let off = side.sign() * leg.hip_offset_y;
                let hip_off = Vector2::new(-sy * off, cy * off);
                let sole = sk.foot_pose(side, t);
                let ankle = sole.transform_point(&Vector3::new(0.0, 0.0, leg.ankle_height));
                let ankle_xy = Vector2::new(ankle.x, ankle.y);
                for (mass, w) in [(m.thigh, w_thigh), (m.shank, w_shank)] {
                    out.push(LinkSample {
                        mass,
                        c: 1.0 - w,
                        e: hip_off * (1.0 - w) + ankle_xy * w,
                        z: h * (1.0 - w) + ankle.z * w,
                    });
                }
                let foot = (ankle + sole.position) / 2.0;
                out.push(LinkSample {
                    mass: m.foot,
                    c: 0.0,
                    e: Vector2::new(foot.x, foot.y),
                    z: foot.z,
                });
            }
            out
        })
        .collect()
}

/// Link model from full IK along a previous pelvis trajectory.
fn refined_model(
    sk: &PlanSkeleton,
    model: &RobotModel,
    pelvis: &PiecewisePolynomial,
) -> Result<Vec<Vec<LinkSample>>, PlanError> {
    (0..=sk.total_ticks())
        .map(|tick| {
            let t = tick as f64 * sk.dt();
            let p = pelvis.eval_all(t);
            let pose = Pose::from_xyz_rpy(p[0], p[1], p[2], p[3], p[4], p[5]);
            let solve = |side: Side| {
                inverse_leg_unchecked(&pose, &sk.foot_pose(side, t), side, model)
                    .map_err(|source| PlanError::Infeasible { tick, t, source })
            };
            let (l, r) = (solve(Side::Left)?, solve(Side::Right)?);
            let pts = link_points(&l, &r, &pose, model);
            let base = Vector2::new(p[0], p[1]);
            Ok(pts
                .iter()
                .enumerate()
                .map(|(i, (mass, q))| {
                    let is_foot = i == 3 || i == 6;
                    let xy = Vector2::new(q.x, q.y);
                    LinkSample {
                        mass: *mass,
                        c: if is_foot { 0.0 } else { 1.0 },
                        e: if is_foot { xy } else { xy - base },
                        z: q.z,
                    }
                })
                .collect())
        })
        .collect()
}

struct Problem {
    a: DMatrix<f64>,
    b: [DVector<f64>; 2],
}

/// Rows `alpha * p - beta * p_dd = zmp_ref - gamma` for every tick.
fn build_rows(
    sk: &PlanSkeleton,
    links: &[Vec<LinkSample>],
    degree: usize,
) -> Result<Problem, PlanError> {
    let dt = sk.dt();
    let n = links.len();
    let nc = degree + 1;
    let nvar = sk.phases.len() * nc;
    let mut a = DMatrix::zeros(n, nvar);
    let mut b = [DVector::zeros(n), DVector::zeros(n)];
    let second_diff = |k: usize, f: &dyn Fn(usize) -> f64| -> f64 {
        if n < 3 {
            return 0.0;
        }
        let k = k.clamp(1, n - 2);
        (f(k + 1) - 2.0 * f(k) + f(k - 1)) / (dt * dt)
    };
    for k in 0..n {
        let (mut alpha, mut beta, mut den) = (0.0, 0.0, 0.0);
        let mut gamma = Vector2::zeros();
        for (i, l) in links[k].iter().enumerate() {
            let zdd = second_diff(k, &|j| links[j][i].z);
            let edd = Vector2::new(
                second_diff(k, &|j| links[j][i].e.x),
                second_diff(k, &|j| links[j][i].e.y),
            );
            let fz = l.mass * (zdd + GRAVITY);
            alpha += fz * l.c;
            beta += l.mass * l.z * l.c;
            gamma += l.e * fz - edd * (l.mass * l.z);
            den += fz;
        }
        if den <= 0.0 {
            return Err(PlanError::DynamicInfeasibility { index: k });
        }
        let seg = sk.interval_index(k);
        let iv = &sk.phases[seg];
        let dur = iv.end - iv.start;
        let s = (k - iv.start_tick) as f64 / (iv.end_tick - iv.start_tick) as f64;
        for p in 0..nc {
            a[(k, seg * nc + p)] =
                (alpha * basis(p, s, 0) - beta * basis(p, s, 2) / (dur * dur)) / den;
        }
        let t = k as f64 * dt;
        for (axis, rhs) in b.iter_mut().enumerate() {
            rhs[k] = sk.zmp_ref.eval(t, axis) - gamma[axis] / den;
        }
    }
    Ok(Problem { a, b })
}

/// C² continuity at each interior knot plus zero velocity at both ends.
/// Returns the matrix and, per row, the knot it belongs to.
fn constraints(sk: &PlanSkeleton, degree: usize) -> (DMatrix<f64>, Vec<usize>) {
    let nc = degree + 1;
    let nseg = sk.phases.len();
    let dur = |j: usize| sk.phases[j].end - sk.phases[j].start;
    let mut rows: Vec<(Vec<(usize, f64)>, usize)> = Vec::new();
    rows.push(((0..nc).map(|p| (p, basis(p, 0.0, 1) / dur(0))).collect(), 0));
    for j in 0..nseg.saturating_sub(1) {
        for order in 0..3 {
            let mut row: Vec<(usize, f64)> = (0..nc)
                .map(|p| (j * nc + p, basis(p, 1.0, order) / dur(j).powi(order as i32)))
                .collect();
            row.extend((0..nc).map(|p| {
                (
                    (j + 1) * nc + p,
                    -basis(p, 0.0, order) / dur(j + 1).powi(order as i32),
                )
            }));
            rows.push((row, j + 1));
        }
    }
    let last = nseg - 1;
    rows.push((
        (0..nc)
            .map(|p| (last * nc + p, basis(p, 1.0, 1) / dur(last)))
            .collect(),
        nseg,
    ));
    let mut c = DMatrix::zeros(rows.len(), nseg * nc);
    let mut knots = Vec::with_capacity(rows.len());
    for (r, (row, knot)) in rows.into_iter().enumerate() {
        for (col, v) in row {
            c[(r, col)] = v;
        }
        knots.push(knot);
    }
    (c, knots)
}

fn rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = max * 1e-10 * (m.nrows().max(m.ncols()) as f64);
    sv.iter().filter(|v| **v > tol).count()
}

fn check_rank(sk: &PlanSkeleton, c: &DMatrix<f64>, knots: &[usize]) -> Result<(), PlanError> {
    if rank(c) == c.nrows() {
        return Ok(());
    }
    let knot_time = |k: usize| {
        if k == 0 {
            sk.phases[0].start
        } else {
            sk.phases[k - 1].end
        }
    };
    let mut upto = 0;
    while upto < c.nrows() {
        let knot = knots[upto];
        while upto < c.nrows() && knots[upto] == knot {
            upto += 1;
        }
        if rank(&c.rows(0, upto).into_owned()) < upto {
            return Err(PlanError::RankDeficient {
                knot,
                t: knot_time(knot),
            });
        }
    }
    unreachable!("rank deficiency must appear within the constraint rows")
}

/// Minimises `|A x - b|²` subject to `C x = 0` through the KKT system.
fn solve_constrained(a: &DMatrix<f64>, b: &DVector<f64>, c: &DMatrix<f64>) -> DVector<f64> {
    let n = a.ncols();
    let m = c.nrows();
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&(a.transpose() * a));
    kkt.view_mut((0, n), (n, m)).copy_from(&c.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(c);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(a.transpose() * b));
    let sol = kkt
        .full_piv_lu()
        .solve(&rhs)
        .expect("KKT system of a full-rank constraint set is regular");
    sol.rows(0, n).into_owned()
}

fn to_trajectory(
    sk: &PlanSkeleton,
    x: &DVector<f64>,
    y: &DVector<f64>,
    degree: usize,
    yaw: f64,
) -> Result<PiecewisePolynomial, PlanError> {
    let nc = degree + 1;
    let segs = sk
        .phases
        .iter()
        .enumerate()
        .map(|(j, iv)| {
            let dur = iv.end - iv.start;
            let scaled = |v: &DVector<f64>| -> Vec<f64> {
                (0..nc)
                    .map(|p| v[j * nc + p] / dur.powi(p as i32))
                    .collect()
            };
            PolySegment::new(
                iv.start,
                iv.end,
                vec![
                    scaled(x),
                    scaled(y),
                    vec![sk.pelvis_height],
                    vec![0.0],
                    vec![0.0],
                    vec![yaw],
                ],
            )
        })
        .collect();
    Ok(PiecewisePolynomial::new(segs)?)
}

/// Fits piecewise-polynomial pelvis x/y (knots at phase boundaries, C²,
/// at rest at both ends) minimising the squared deviation of the multi-link
/// ZMP from the reference at every control tick. Pelvis height and
/// orientation are held constant.
pub fn optimize_pelvis_trajectory(
    sk: &PlanSkeleton,
    model: &RobotModel,
    options: &PelvisOptions,
) -> Result<PelvisFit, PlanError> {
    if !(3..=5).contains(&options.degree) {
        return Err(PlanError::InvalidParams {
            field: "degree".into(),
            reason: format!("{} is outside 3..=5", options.degree),
        });
    }
    let degree = options.degree;
    let yaw = sk.footsteps[0].pose.yaw();
    let (c, knots) = constraints(sk, degree);
    check_rank(sk, &c, &knots)?;

    let mut links = initial_model(sk, model, yaw);
    let mut iteration = 0;
    loop {
        let prob = build_rows(sk, &links, degree)?;
        let x = solve_constrained(&prob.a, &prob.b[0], &c);
        let y = solve_constrained(&prob.a, &prob.b[1], &c);
        let residual =
            (&prob.a * &x - &prob.b[0]).norm_squared() + (&prob.a * &y - &prob.b[1]).norm_squared();
        let trajectory = to_trajectory(sk, &x, &y, degree, yaw)?;
        if iteration == options.refinements {
            return Ok(PelvisFit {
                trajectory,
                residual,
            });
        }
        links = refined_model(sk, model, &trajectory)?;
        iteration += 1;
    }
}
