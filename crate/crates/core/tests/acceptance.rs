//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use biped_core::controller::AdaptationState;
use biped_core::kinematics::{inverse_leg, leg_frames, numeric_ik_oracle, LegJoint};
use biped_core::model::Corner;
use biped_core::planner::{compute_zmp, plan_gait, planned_zmp, polygon_margin, support_polygon};
use biped_core::sensor::{aggregate, read_probes};
use biped_core::sim::TerrainMap;
use biped_core::sweep::{run_sweep, SweepSpec};
use biped_core::trace::Event;
use biped_core::{
    default_model, run_episode, Episode, GaitParams, LegJointVector, Pose, ProbeReading,
    RobotModel, ScenarioConfig, SensorFeedback, Side, GRAVITY,
};
use nalgebra::{Vector2, Vector3};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 10_000;
const ORACLE_SAMPLES: usize = 1_000;
const SENSOR_ANGLE_TOL: f64 = 1e-9;
const SENSOR_HEIGHT_TOL: f64 = 1e-12;
const ANTISYMMETRY_TOL: f64 = 1e-15;
const ROUND_TRIP_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-6;
const ZMP_MARGIN: f64 = 0.02;
const CART_TABLE_TOL: f64 = 1e-9;
const SEVERE_IMPACT: f64 = 0.05;
const GENTLE_IMPACT: f64 = 0.01;
const TIP_ERROR: f64 = 0.07;
const SLOPE_TOL: f64 = 0.2;
const DT: f64 = 0.005;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn(&RobotModel) -> Verdict);

fn scenario(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name);
    ScenarioConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn episode(sc: &ScenarioConfig, model: &RobotModel) -> Result<Episode, String> {
    run_episode(sc, model).map_err(|e| e.to_string())
}

fn check(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    check(
        elapsed.as_secs_f64() < limit,
        format!("took {:.2} s, limit {limit} s", elapsed.as_secs_f64()),
    )
}

/// Vertical offsets of the probe tips below the sole origin.
fn tip_heights(model: &RobotModel, roll: f64, pitch: f64) -> [f64; 4] {
    Corner::ALL.map(|c| {
        let p = model.foot.probe(c);
        -pitch.sin() * p.x + pitch.cos() * roll.sin() * p.y
    })
}

fn sensor_algebra(model: &RobotModel) -> Verdict {
    let start = Instant::now();
    let f = &model.foot;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let limit = 5f64.to_radians();
    let mut worst = [0.0f64; 3];
    let mut poses = 0;
    for _ in 0..SAMPLES {
        let g: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..f.sensor_range));
        let fb = aggregate(&ProbeReading::from_gaps(g, f.sensor_range, 0.0), f);
        check(
            fb.d_avg == (g[0] + g[1] + g[2] + g[3]) / 4.0,
            format!("mean of {g:?} is {}", fb.d_avg),
        )?;
        let [a, b, c, d] = g;
        let fr = aggregate(
            &ProbeReading::from_gaps([b, a, d, c], f.sensor_range, 0.0),
            f,
        );
        let lr = aggregate(
            &ProbeReading::from_gaps([d, c, b, a], f.sensor_range, 0.0),
            f,
        );
        worst[0] = worst[0]
            .max((fr.phi_avg + fb.phi_avg).abs())
            .max((lr.alpha_avg + fb.alpha_avg).abs());
    }
    while poses < SAMPLES {
        let roll = rng.random_range(-limit..limit);
        let pitch = rng.random_range(-limit..limit);
        let z = tip_heights(model, roll, pitch);
        let lo = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let band = f.sensor_range - (hi - lo);
        if band <= 1e-6 {
            continue;
        }
        let h = -lo + rng.random_range(0.0..band * 0.999);
        let sole = Pose::from_xyz_rpy(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            h,
            roll,
            pitch,
            rng.random_range(-1.0..1.0),
        );
        let reading = read_probes(&sole, &TerrainMap::flat(), f, 0.0).map_err(|e| e.to_string())?;
        let fb = aggregate(&reading, f);
        check(
            fb.all_in_range,
            format!("pose {sole:?} left the sensing band"),
        )?;
        worst[1] = worst[1]
            .max((fb.phi_avg - pitch).abs())
            .max((fb.alpha_avg - roll).abs());
        worst[2] = worst[2].max((fb.d_avg - h).abs());
        poses += 1;
    }
    check(
        worst[0] <= ANTISYMMETRY_TOL,
        format!("antisymmetry error {:.3e}", worst[0]),
    )?;
    check(
        worst[1] <= SENSOR_ANGLE_TOL,
        format!("round-trip angle error {:.3e}", worst[1]),
    )?;
    check(
        worst[2] <= SENSOR_HEIGHT_TOL,
        format!("round-trip height error {:.3e}", worst[2]),
    )?;
    within(start.elapsed(), 10.0)?;
    Ok(format!(
        "{SAMPLES} gap sets exact mean, antisymmetry {:.1e}; {SAMPLES} poses round trip angle {:.1e} rad, height {:.1e} m; {:.2} s",
        worst[0],
        worst[1],
        worst[2],
        start.elapsed().as_secs_f64()
    ))
}

fn controller_closure(model: &RobotModel) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let exact = |v: f64| BigRational::from_float(v).expect("finite");
    for seq in 0..SAMPLES {
        let mut s = AdaptationState::new();
        s.enter_ss(Side::Left);
        let n = rng.random_range(1..=32);
        let mut sum = (
            BigRational::from_integer(BigInt::from(0)),
            BigRational::from_integer(BigInt::from(0)),
        );
        let mut abs = (0.0, 0.0);
        for k in 0..n {
            let des = (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
            let fb = SensorFeedback {
                d_avg: 0.01,
                phi_avg: rng.random_range(-0.05..0.05),
                alpha_avg: rng.random_range(-0.05..0.05),
                all_in_range: true,
            };
            s.update_cumulative(des, &fb, 0.0)
                .map_err(|e| e.to_string())?;
            let e = (des.0 - fb.phi_avg, des.1 - fb.alpha_avg);
            sum.0 += exact(e.0);
            sum.1 += exact(e.1);
            abs.0 += e.0.abs();
            abs.1 += e.1.abs();
            let steps = (k + 1) as f64 * f64::EPSILON;
            for (got, want, bound) in [
                (s.phi_ce, &sum.0, steps * abs.0),
                (s.alpha_ce, &sum.1, steps * abs.1),
            ] {
                let got = exact(got);
                let diff = if &got > want {
                    &got - want
                } else {
                    want - &got
                };
                check(
                    diff <= exact(bound),
                    format!("sequence {seq} tick {k} drifts from the running sum"),
                )?;
            }
        }
        let pitch = rng.random_range(-0.5..0.5);
        let roll = rng.random_range(-0.3..0.3);
        let idle = {
            let mut s = AdaptationState::new();
            s.enter_ss(Side::Right);
            s
        };
        let cmd = idle.ankle_command((pitch, roll), Side::Right, model, 1.0);
        check(
            cmd.phi_input == pitch && cmd.alpha_input == roll && cmd.z_override.is_none(),
            format!("zero corrections altered command ({pitch}, {roll})"),
        )?;
    }
    within(start.elapsed(), 5.0)?;
    Ok(format!(
        "{SAMPLES} sequences match the exact running sum; commands transparent; {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

fn random_joints(rng: &mut ChaCha8Rng, side: Side, model: &RobotModel) -> LegJointVector {
    let q = std::array::from_fn(|i| {
        let s = model.leg_joint(side, LegJoint::ALL[i]);
        let lo = if LegJoint::ALL[i] == LegJoint::Knee {
            0.05
        } else {
            s.range_min
        };
        lo + (s.range_max - lo) * rng.random_range(0.05..0.95)
    });
    LegJointVector::new(side, q)
}

/// Reachable targets on the branch the analytic IK returns: hip above ankle
/// in sole axes.
fn reachable_target(rng: &mut ChaCha8Rng, model: &RobotModel) -> LegJointVector {
    loop {
        let side = if rng.random_bool(0.5) {
            Side::Left
        } else {
            Side::Right
        };
        let q = random_joints(rng, side, model);
        let f = leg_frames(&q, model);
        if (f.sole.rotation.inverse() * (f.hip - f.ankle)).z > 0.0 {
            return q;
        }
    }
}

fn kinematics(model: &RobotModel) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut pos, mut rot) = (0.0f64, 0.0f64);
    for _ in 0..SAMPLES {
        let q = reachable_target(&mut rng, model);
        let pelvis = Pose::from_xyz_rpy(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(0.5..1.0),
            rng.random_range(-0.1..0.1),
            rng.random_range(-0.1..0.1),
            rng.random_range(-3.0..3.0),
        );
        let sole = pelvis.compose(&leg_frames(&q, model).sole);
        let solved = inverse_leg(&pelvis, &sole, q.side, model).map_err(|e| e.to_string())?;
        let back = pelvis.compose(&leg_frames(&solved, model).sole);
        pos = pos.max((back.position - sole.position).norm());
        rot = rot.max(back.angle_to(&sole));
    }
    check(
        pos <= ROUND_TRIP_TOL && rot <= ROUND_TRIP_TOL,
        format!("round trip {pos:.3e} m, {rot:.3e} rad"),
    )?;
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_SAMPLES {
        let q = reachable_target(&mut rng, model);
        let sole = leg_frames(&q, model).sole;
        let analytic =
            inverse_leg(&Pose::identity(), &sole, q.side, model).map_err(|e| e.to_string())?;
        let mut seed = q;
        for a in seed.angles.iter_mut() {
            *a += rng.random_range(-0.05..0.05);
        }
        let numeric =
            numeric_ik_oracle(&Pose::identity(), &sole, model, &seed).map_err(|e| e.to_string())?;
        for i in 0..6 {
            worst = worst.max((analytic.angles[i] - numeric.angles[i]).abs());
        }
    }
    check(
        worst <= ORACLE_TOL,
        format!("analytic and numeric IK differ by {worst:.3e} rad"),
    )?;
    Ok(format!(
        "{SAMPLES} targets round trip {pos:.1e} m, {rot:.1e} rad; {ORACLE_SAMPLES} oracle solves agree to {worst:.1e} rad"
    ))
}

fn planner(model: &RobotModel) -> Verdict {
    let plan = plan_gait(&GaitParams::default(), model).map_err(|e| e.to_string())?;
    let zmp = planned_zmp(&plan, model).map_err(|e| e.to_string())?;
    let margin = zmp
        .iter()
        .enumerate()
        .map(|(k, z)| polygon_margin(&support_polygon(&plan, model, k), &Vector2::new(z.x, z.y)))
        .fold(f64::INFINITY, f64::min);
    check(margin >= ZMP_MARGIN, format!("ZMP margin {margin:.4} m"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let p0 = Vector3::new(
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(0.5..1.0),
        );
        let v0 = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            0.0,
        );
        let acc = Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            0.0,
        );
        let samples: Vec<Vec<Vector3<f64>>> = (0..50)
            .map(|k| {
                let t = k as f64 * DT;
                vec![p0 + v0 * t + acc * (0.5 * t * t)]
            })
            .collect();
        let got = compute_zmp(&samples, &[10.0], DT).map_err(|e| e.to_string())?;
        for (s, z) in samples.iter().zip(&got) {
            let c = s[0];
            worst = worst
                .max((z.x - (c.x - c.z / GRAVITY * acc.x)).abs())
                .max((z.y - (c.y - c.z / GRAVITY * acc.y)).abs());
        }
    }
    check(
        worst <= CART_TABLE_TOL,
        format!("cart-table mismatch {worst:.3e} m"),
    )?;
    Ok(format!(
        "{} ticks, smallest ZMP margin {margin:.4} m; cart-table agreement {worst:.1e} m",
        zmp.len()
    ))
}

fn deflection_ab(model: &RobotModel) -> Verdict {
    let mut sc = scenario("deflection.toml");
    sc.set_tip_error(TIP_ERROR);
    let mut speeds = [0.0; 2];
    for (i, on) in [false, true].into_iter().enumerate() {
        sc.controller.adaptation = on;
        let start = Instant::now();
        let ep = episode(&sc, model)?;
        within(start.elapsed(), 30.0)?;
        speeds[i] = ep.metrics.max_impact_speed;
        if on {
            check(
                ep.metrics.success,
                format!("adaptation on failed: {:?}", ep.metrics.failure),
            )?;
            check(
                ep.metrics
                    .steps
                    .iter()
                    .all(|s| s.impact_speed <= GENTLE_IMPACT),
                format!("adaptation on peaks at {:.4} m/s", speeds[i]),
            )?;
        } else {
            check(
                ep.metrics
                    .steps
                    .iter()
                    .any(|s| s.impact_speed > SEVERE_IMPACT),
                format!("adaptation off peaks at only {:.4} m/s", speeds[i]),
            )?;
        }
    }
    Ok(format!(
        "peak impact off {:.4} m/s, on {:.5} m/s",
        speeds[0], speeds[1]
    ))
}

fn ds_end_corrections_are_zero(ep: &Episode) -> Result<usize, String> {
    let recs = &ep.trace.records;
    let mut seen_swing = false;
    let mut count = 0;
    for w in recs.windows(2) {
        seen_swing |= w[0].phase.is_single();
        if seen_swing && !w[0].phase.is_single() && w[1].phase.is_single() {
            check(
                w[0].phi_ce == 0.0 && w[0].alpha_ce == 0.0,
                format!(
                    "tick {} ends DS with ({}, {})",
                    w[0].tick, w[0].phi_ce, w[0].alpha_ce
                ),
            )?;
            count += 1;
        }
    }
    Ok(count)
}

fn obstacle_walk(model: &RobotModel) -> Verdict {
    let sc = scenario("obstacle.toml");
    let ep = episode(&sc, model)?;
    check(
        ep.metrics.success,
        format!("episode failed: {:?}", ep.metrics.failure),
    )?;
    let swings: Vec<_> = ep
        .plan
        .phases
        .iter()
        .filter(|p| p.phase.is_single())
        .collect();
    let on_obstacle: Vec<usize> = swings
        .iter()
        .enumerate()
        .filter(|(_, iv)| {
            let p = ep.plan.footsteps[iv.target.expect("swing has a target")].pose;
            model.foot.outline().iter().any(|c| {
                let w = p.transform_point(&Vector3::new(c.x, c.y, 0.0));
                sc.terrain.height(w.x, w.y) > 0.0
            })
        })
        .map(|(i, _)| i)
        .collect();
    check(
        on_obstacle.len() == 1,
        format!("steps {on_obstacle:?} land on the obstacle"),
    )?;
    let guarded: Vec<usize> = ep
        .metrics
        .steps
        .iter()
        .filter(|s| s.guard_triggered)
        .map(|s| s.index)
        .collect();
    check(
        guarded == on_obstacle,
        format!("guard on steps {guarded:?}, obstacle under {on_obstacle:?}"),
    )?;
    let events = ep
        .trace
        .records
        .iter()
        .filter(|r| r.has(Event::Guard))
        .count();
    check(events == 1, format!("{events} guard events"))?;
    let resets = ds_end_corrections_are_zero(&ep)?;
    Ok(format!(
        "guard once on step {}; {resets} DS ends with zero corrections; peak {:.5} m/s",
        on_obstacle[0], ep.metrics.max_impact_speed
    ))
}

fn slope_walk(model: &RobotModel) -> Verdict {
    let sc = scenario("slope.toml");
    let slope = &sc.terrain.slopes[0];
    let ep = episode(&sc, model)?;
    check(
        ep.metrics.success,
        format!("episode failed: {:?}", ep.metrics.failure),
    )?;
    let swings: Vec<_> = ep
        .plan
        .phases
        .iter()
        .filter(|p| p.phase.is_single())
        .collect();
    let mut errors = Vec::new();
    for (iv, step) in swings.iter().zip(&ep.metrics.steps) {
        let p = ep.plan.footsteps[iv.target.expect("swing has a target")].pose;
        let on_slope = model.foot.outline().iter().all(|c| {
            let w = p.transform_point(&Vector3::new(c.x, c.y, 0.0));
            w.x > slope.x_start && w.x < slope.x_end
        });
        if !on_slope {
            continue;
        }
        // ground pitch under the footprint, toe-up negative
        let (x, y, h) = (p.position.x, p.position.y, 1e-3);
        let ground =
            -((sc.terrain.height(x + h, y) - sc.terrain.height(x - h, y)) / (2.0 * h)).atan();
        errors.push(((step.phi_ce_at_touchdown - ground) / ground).abs());
    }
    check(
        !errors.is_empty(),
        "no step lands fully on the slope".into(),
    )?;
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    check(
        worst <= SLOPE_TOL,
        format!("pitch correction misses the slope by {:.0}%", worst * 100.0),
    )?;
    Ok(format!(
        "{} steps on the slope, pitch correction within {:.1}% of the incline; peak {:.4} m/s",
        errors.len(),
        worst * 100.0,
        ep.metrics.max_impact_speed
    ))
}

fn timing_and_determinism(model: &RobotModel) -> Verdict {
    let mut checked = 0;
    for name in [
        "flat.toml",
        "obstacle.toml",
        "slope.toml",
        "deflection.toml",
    ] {
        let mut sc = scenario(name);
        sc.controller.noise_amplitude = 2e-4;
        let a = episode(&sc, model)?;
        let b = episode(&sc, model)?;
        check(
            a.trace.timing_is_exact(DT),
            format!("{name}: tick spacing is not {DT} s"),
        )?;
        check(
            a.trace.to_csv() == b.trace.to_csv(),
            format!("{name}: equal seeds gave different traces"),
        )?;
        checked += 1;
    }
    Ok(format!(
        "{checked} noisy scenarios: exact {DT} s ticks, byte-equal reruns"
    ))
}

fn monotone_sweep(model: &RobotModel) -> Verdict {
    let base = scenario("flat.toml");
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/sweep_deflection.toml");
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let spec = SweepSpec::from_toml(&text).map_err(|e| e.to_string())?;
    let rows = run_sweep(&base, &spec, model);
    let mut pairs = Vec::new();
    for e in &spec.grid.deflection {
        let speed = |on: bool| {
            rows.iter()
                .find(|r| r.cell.deflection == Some(*e) && r.cell.adaptation == Some(on))
                .map(|r| r.max_impact_speed)
                .ok_or_else(|| format!("missing cell E={e} adaptation={on}"))
        };
        let (on, off) = (speed(true)?, speed(false)?);
        check(on <= off, format!("E={e}: on {on:.5} > off {off:.5} m/s"))?;
        pairs.push(format!("{:.0}cm {on:.4}/{off:.4}", e * 100.0));
    }
    Ok(format!("on/off peak impact (m/s): {}", pairs.join(", ")))
}

fn main() -> ExitCode {
    let model = default_model();
    let criteria: [Criterion; 9] = [
        ("sensor algebra", sensor_algebra),
        ("cumulative controller closure", controller_closure),
        ("kinematics round trip and oracle", kinematics),
        ("planner ZMP margin and cart-table", planner),
        ("deflection A/B", deflection_ab),
        ("unknown obstacle", obstacle_walk),
        ("3 degree slope", slope_walk),
        ("timing and determinism", timing_and_determinism),
        ("monotone improvement sweep", monotone_sweep),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run(&model) {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
