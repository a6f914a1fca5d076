use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use roughflow_core::cone::invert_cone;
use roughflow_core::field::{GaussianProfile, PlaneWave, RadialBump, VectorField};
use roughflow_core::flow1d::{integrate_1d, AlphaSpec, MultiSpeedForce};
use roughflow_core::flow3d::{integrate_trajectory, PhasePoint};
use roughflow_core::models::{rough_field, smooth_field, smooth_force, RoughFieldSpec};
use roughflow_core::wave::{wave_op, KirchhoffField};
use roughflow_core::{SphereRule, Vector3};

fn sphere_rule(c: &mut Criterion) {
    let rule = SphereRule::new(30).unwrap();
    let wave = PlaneWave::new(Vector3::new(1.0, 2.0, 0.5));
    let x = Vector3::new(0.1, 0.2, 0.3);
    c.bench_function("sphere_rule_build_30", |b| b.iter(|| SphereRule::new(black_box(30)).unwrap()));
    c.bench_function("wave_op_plane_wave_30", |b| b.iter(|| wave_op(&wave, &rule, black_box(2.0), &x)));
}

fn kirchhoff(c: &mut Criterion) {
    let x = Vector3::new(0.4, -0.3, 0.2);
    let smooth = smooth_field();
    c.bench_function("radial_kirchhoff_smooth", |b| b.iter(|| smooth.eval(black_box(0.7), &x)));
    let rough = rough_field(&RoughFieldSpec::default());
    c.bench_function("radial_kirchhoff_rough", |b| b.iter(|| rough.eval(black_box(0.7), &x)));
    let bump = Arc::new(RadialBump {
        center: Vector3::zeros(),
        amplitude: 1.0,
        profile: GaussianProfile { width: 0.8 },
    });
    let quad = KirchhoffField::isotropic(bump, Arc::new(SphereRule::new(30).unwrap()));
    c.bench_function("kirchhoff_quadrature_30", |b| b.iter(|| quad.eval_field(black_box(0.7), &x)));
}

fn trajectories(c: &mut Criterion) {
    let force = smooth_force();
    let p = PhasePoint::new(Vector3::new(0.1, 0.0, -0.2), Vector3::new(0.5, -0.3, 0.2));
    c.bench_function("rk4_smooth_t1_dt1e-3", |b| {
        b.iter(|| integrate_trajectory(&force, black_box(p), 1.0, 1e-3).unwrap())
    });
    let alpha = AlphaSpec::identity();
    let f1 = MultiSpeedForce::default_instance(2.5, 64).unwrap();
    c.bench_function("rk4_1d_default_t1_dt2.5e-4", |b| {
        b.iter(|| integrate_1d(&alpha, &f1, black_box(0.2), &[0.6], 1.0, 2.5e-4).unwrap())
    });
}

fn cone(c: &mut Criterion) {
    let traj = integrate_trajectory(
        &smooth_force(),
        PhasePoint::new(Vector3::zeros(), Vector3::new(0.5, 0.2, -0.1)),
        1.0,
        1e-3,
    )
    .unwrap();
    let z = traj.x[traj.len() - 1] + Vector3::new(0.3, -0.2, 0.1);
    c.bench_function("cone_inversion_1000_nodes", |b| {
        b.iter(|| invert_cone(&traj, black_box(&z), 1e-12).unwrap())
    });
}

criterion_group!(benches, sphere_rule, kirchhoff, trajectories, cone);
criterion_main!(benches);
