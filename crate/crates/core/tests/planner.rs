use biped_core::planner::{
    compute_zmp, joint_trajectories, optimize_pelvis_trajectory, plan_gait, plan_skeleton,
    planned_zmp, polygon_margin, support_polygon, PelvisOptions, Timeline,
};
use biped_core::{default_model, GaitParams, Phase, Pose, Side, GRAVITY};
use nalgebra::{Vector2, Vector3};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// A single mass on a quadratic path has constant acceleration, so the
    /// cart-table ZMP is exactly x - z·ẍ/(z̈ + g).
    #[test]
    fn single_mass_matches_cart_table(
        p0 in prop::array::uniform3(-0.5..0.5f64),
        v0 in prop::array::uniform3(-0.5..0.5f64),
        acc in prop::array::uniform3(-2.0..2.0f64),
        z0 in 0.5..1.0f64,
    ) {
        let dt = 0.005;
        let at = |t: f64| {
            let c = |i: usize, base: f64| base + v0[i] * t + 0.5 * acc[i] * t * t;
            Vector3::new(c(0, p0[0]), c(1, p0[1]), c(2, z0))
        };
        let samples: Vec<Vec<Vector3<f64>>> = (0..40).map(|k| vec![at(k as f64 * dt)]).collect();
        let zmp = compute_zmp(&samples, &[3.0], dt).unwrap();
        for (k, z) in zmp.iter().enumerate() {
            let p = samples[k][0];
            let den = acc[2] + GRAVITY;
            let x = p.x - p.z * acc[0] / den;
            let y = p.y - p.z * acc[1] / den;
            prop_assert!((z.x - x).abs() < 1e-9, "tick {k}: {} vs {x}", z.x);
            prop_assert!((z.y - y).abs() < 1e-9);
        }
    }
}

#[test]
fn default_plan_timing_and_footsteps() {
    let model = default_model();
    let params = GaitParams::default();
    let plan = plan_gait(&params, &model).unwrap();
    // initial rest, seven swings each followed by double support, final rest
    assert_eq!(plan.total_ticks(), 1760);
    assert_eq!(plan.swing_count(), params.n_steps + 1);
    assert_eq!(plan.footsteps.len(), 2 + params.n_steps + 1);
    let mut expected_side = Side::Left;
    for (i, iv) in plan.phases.iter().enumerate() {
        assert_eq!(iv.start, iv.start_tick as f64 * params.control_dt);
        if i > 0 {
            assert_eq!(iv.start_tick, plan.phases[i - 1].end_tick);
        }
        if let Phase::SingleSupport { support } = iv.phase {
            assert_eq!(support.other(), expected_side);
            assert_eq!(iv.end_tick - iv.start_tick, 160);
            let target = &plan.footsteps[iv.target.unwrap()];
            assert_eq!(target.side, expected_side);
            let landed = plan.foot_pose(expected_side, iv.end);
            assert!((landed.position - target.pose.position).norm() < 1e-12);
            expected_side = expected_side.other();
        }
    }
    let last = plan.footsteps.last().unwrap().pose.position.x;
    assert!((last - (params.n_steps as f64 - 0.5) * params.step_length).abs() < 1e-12);
}

#[test]
fn planned_zmp_stays_inside_support_with_margin() {
    let model = default_model();
    let plan = plan_gait(&GaitParams::default(), &model).unwrap();
    let zmp = planned_zmp(&plan, &model).unwrap();
    assert_eq!(zmp.len(), plan.total_ticks() + 1);
    let worst = zmp
        .iter()
        .enumerate()
        .map(|(k, z)| polygon_margin(&support_polygon(&plan, &model, k), &Vector2::new(z.x, z.y)))
        .fold(f64::INFINITY, f64::min);
    assert!(worst >= 0.02, "smallest ZMP margin {worst}");
}

#[test]
fn pelvis_trajectory_is_smooth_and_feasible() {
    let model = default_model();
    let params = GaitParams::default();
    let sk = plan_skeleton(&params, &model, &Pose::identity()).unwrap();
    let fit = optimize_pelvis_trajectory(&sk, &model, &PelvisOptions::default()).unwrap();
    let [c0, c1, c2] = fit.trajectory.continuity_defects();
    assert!(
        c0 < 1e-9 && c1 < 1e-9 && c2 < 1e-6,
        "defects {c0} {c1} {c2}"
    );
    assert!((fit.trajectory.t_start()).abs() < 1e-12);
    assert!((fit.trajectory.t_end() - sk.duration()).abs() < 1e-12);
    let plan = plan_gait(&params, &model).unwrap();
    let joints = joint_trajectories(&plan, &model).unwrap();
    assert_eq!(joints.len(), plan.total_ticks() + 1);
}

#[test]
fn overlong_steps_are_rejected() {
    let model = default_model();
    let params = GaitParams {
        step_length: 2.0,
        ..GaitParams::default()
    };
    assert!(plan_gait(&params, &model).is_err());
}
