use criterion::{criterion_group, criterion_main, Criterion};
use mad_core::background::BackgroundField;
use mad_core::forward::{sample_measurements, Measurement, Scenario};
use mad_core::harmonics::{sht_forward, sph_harm, SphereGrid};
use mad_core::inversion::extract_multipoles;
use mad_core::layer::{assemble_adjoint_np, solve_resolvent, BoundaryDensity, Sign};
use mad_core::mesh::{make_mesh, ShapeSpec};
use mad_core::polarization::{Anomaly, MediumParams, PolarizationContext, TensorModel};
use nalgebra::Vector3;
use num_complex::Complex64;
use std::hint::black_box;
use std::sync::Arc;

fn bench_mesh(c: &mut Criterion) {
    c.bench_function("make_mesh refinement 3", |b| {
        b.iter(|| make_mesh(black_box(&ShapeSpec::unit_ball(3))).unwrap())
    });
}

fn bench_np_assembly(c: &mut Criterion) {
    let mesh = Arc::new(make_mesh(&ShapeSpec::unit_ball(2)).unwrap());
    c.bench_function("assemble K* refinement 2", |b| {
        b.iter(|| assemble_adjoint_np(black_box(&mesh)))
    });
}

fn bench_resolvent(c: &mut Criterion) {
    let mesh = Arc::new(make_mesh(&ShapeSpec::unit_ball(2)).unwrap());
    let k = assemble_adjoint_np(&mesh);
    let rhs = BoundaryDensity::normal_component(&mesh, 2);
    c.bench_function("resolvent solve refinement 2", |b| {
        b.iter(|| {
            solve_resolvent(
                black_box(&k),
                Complex64::new(1.5, 0.0),
                Sign::Minus,
                black_box(&rhs),
            )
            .unwrap()
        })
    });
}

fn bench_tensor(c: &mut Criterion) {
    let mesh = Arc::new(make_mesh(&ShapeSpec::unit_ball(2)).unwrap());
    let ctx = PolarizationContext::new(mesh);
    let med = MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap();
    let anomaly = Anomaly {
        center: Vector3::zeros(),
        delta: 0.1,
        shape: ShapeSpec::unit_ball(2),
        mu: 2.0,
        eps: 2.0,
        sigma: 0.0,
    };
    c.bench_function("tensor_p refinement 2", |b| {
        b.iter(|| ctx.tensor_p(black_box(&anomaly), &med).unwrap())
    });
}

fn bench_sht(c: &mut Criterion) {
    let grid = SphereGrid::new(16, 32);
    let samples: Vec<Complex64> = grid
        .directions
        .iter()
        .map(|d| sph_harm(3, 1, d).unwrap() + sph_harm(5, -2, d).unwrap())
        .collect();
    c.bench_function("sht_forward n_max 8 on 16x32", |b| {
        b.iter(|| sht_forward(black_box(&grid), black_box(&samples), 8).unwrap())
    });
}

fn scenario() -> Scenario {
    Scenario {
        medium: MediumParams::new(1.0, 1.0, 1.5, 0.0).unwrap(),
        background: BackgroundField::uniform(Vector3::z()),
        anomalies: vec![Anomaly {
            center: Vector3::new(0.1, -0.2, 0.5),
            delta: 0.05,
            shape: ShapeSpec::unit_ball(3),
            mu: 2.0,
            eps: 2.0,
            sigma: 0.0,
        }],
        measurement: Measurement {
            r1: 2.0,
            n_theta: 16,
            n_phi: 32,
            noise_level: 0.0,
            seed: 1,
        },
        model: TensorModel::Full,
    }
}

fn bench_forward_and_extract(c: &mut Criterion) {
    let s = scenario();
    let tensors = s.compute_tensors().unwrap();
    c.bench_function("sample_measurements 16x32", |b| {
        b.iter(|| sample_measurements(black_box(&s), black_box(&tensors)).unwrap())
    });
    let samples = sample_measurements(&s, &tensors).unwrap();
    c.bench_function("extract_multipoles n_max 3", |b| {
        b.iter(|| extract_multipoles(black_box(&samples), 3).unwrap())
    });
}

criterion_group!(
    benches,
    bench_mesh,
    bench_np_assembly,
    bench_resolvent,
    bench_tensor,
    bench_sht,
    bench_forward_and_extract
);
criterion_main!(benches);
