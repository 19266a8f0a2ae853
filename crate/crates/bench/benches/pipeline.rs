use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use biped_bench::{model, scenario};
use biped_core::kinematics::{inverse_leg, Pose};
use biped_core::planner::plan_gait;
use biped_core::sensor::{aggregate, ProbeReading};
use biped_core::{run_episode, Side};

fn kinematics(c: &mut Criterion) {
    let m = model();
    let pelvis = Pose::from_xyz_rpy(0.0, 0.0, 0.75, 0.0, 0.0, 0.0);
    let sole = Pose::from_xyz_rpy(0.1, 0.12, 0.02, 0.03, -0.05, 0.1);
    c.bench_function("inverse_leg", |b| {
        b.iter(|| inverse_leg(black_box(&pelvis), black_box(&sole), Side::Left, &m))
    });
}

fn sensing(c: &mut Criterion) {
    let m = model();
    let r = ProbeReading::from_gaps([0.008, 0.012, 0.011, 0.009], m.foot.sensor_range, 0.0);
    c.bench_function("aggregate", |b| {
        b.iter(|| aggregate(black_box(&r), &m.foot))
    });
}

fn planning(c: &mut Criterion) {
    let m = model();
    let sc = scenario(6, 0.0);
    c.bench_function("plan_gait_6_steps", |b| {
        b.iter(|| plan_gait(black_box(&sc.gait), &m))
    });
}

fn episode(c: &mut Criterion) {
    let m = model();
    let sc = scenario(6, 0.07);
    let mut g = c.benchmark_group("episode");
    g.sample_size(10);
    g.bench_function("deflected_6_steps", |b| {
        b.iter(|| run_episode(black_box(&sc), &m))
    });
    g.finish();
}

criterion_group!(benches, kinematics, sensing, planning, episode);
criterion_main!(benches);
