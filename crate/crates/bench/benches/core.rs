use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use selfcontract_core::annulus::annulus_lemmas;
use selfcontract_core::curve::check_self_contracted_bruteforce;
use selfcontract_core::fields::{MaxAffine, QuadraticField, SpiralField};
use selfcontract_core::flow::{integrate_gradient, integrate_proximal, spiral_flow_config};
use selfcontract_core::foliation::{
    orthogonal_trajectory, torralba_spiral_family, EllipseSpec, DEFAULT_GRID,
    DEFAULT_LEVEL_FRACTION,
};
use selfcontract_core::{check_self_contracted, AnnulusParams, FlowConfig, Polyline, Vec2};

/// Logarithmic spiral sampled at `n` points: self-contracted, with the
/// sweep's worst case of no early exit.
fn log_spiral(n: usize) -> Polyline {
    let pts = (0..n)
        .map(|k| {
            let s = 6.0 * PI * k as f64 / n as f64;
            Vec2::from_polar((-0.3 * s).exp(), -s)
        })
        .collect();
    Polyline::from_points(pts).unwrap()
}

fn self_contracted_check(c: &mut Criterion) {
    let mut g = c.benchmark_group("check_self_contracted");
    for n in [100, 400, 1600] {
        let curve = log_spiral(n);
        g.bench_with_input(BenchmarkId::new("sweep", n), &curve, |b, curve| {
            b.iter(|| check_self_contracted(black_box(curve), 0.0).unwrap())
        });
        if n <= 400 {
            g.bench_with_input(BenchmarkId::new("bruteforce", n), &curve, |b, curve| {
                b.iter(|| check_self_contracted_bruteforce(black_box(curve), 0.0).unwrap())
            });
        }
    }
    g.finish();
}

fn flows(c: &mut Criterion) {
    let quad = QuadraticField::new([[1.0, 0.3], [0.3, 4.0]], Vec2::ZERO).unwrap();
    let cfg = FlowConfig {
        t_max: 5.0,
        ..FlowConfig::default()
    };
    c.bench_function("gradient_flow/quadratic", |b| {
        b.iter(|| integrate_gradient(&quad, black_box(Vec2::new(1.0, 0.5)), &cfg).unwrap())
    });

    let spiral_cfg = spiral_flow_config(100.0);
    let x0 = Vec2::from_polar(0.2122, 0.0);
    c.bench_function("gradient_flow/spiral_t100", |b| {
        b.iter(|| integrate_gradient(&SpiralField, black_box(x0), &spiral_cfg).unwrap())
    });

    let pieces = (0..5)
        .map(|i| (Vec2::unit(2.0 * PI * i as f64 / 5.0), 0.1 * i as f64))
        .collect();
    let max_affine = MaxAffine::new(pieces).unwrap();
    c.bench_function("proximal/max_affine_500", |b| {
        b.iter(|| {
            integrate_proximal(&max_affine, black_box(Vec2::new(3.0, -2.0)), 0.05, 500).unwrap()
        })
    });
}

fn annuli(c: &mut Criterion) {
    let curve = log_spiral(2000);
    let params = AnnulusParams::new(PI / 6.0, 0.6, 1.0).unwrap();
    c.bench_function("annulus_lemmas/log_spiral_2000", |b| {
        b.iter(|| annulus_lemmas(black_box(&curve), &params, 32).unwrap())
    });
}

fn foliation(c: &mut Criterion) {
    let mut g = c.benchmark_group("foliation");
    g.sample_size(10);
    g.bench_function("construction_2_periods", |b| {
        b.iter(|| {
            torralba_spiral_family(
                EllipseSpec::default(),
                2,
                DEFAULT_GRID,
                DEFAULT_LEVEL_FRACTION,
            )
            .unwrap()
        })
    });
    let built = torralba_spiral_family(
        EllipseSpec::default(),
        2,
        DEFAULT_GRID,
        DEFAULT_LEVEL_FRACTION,
    )
    .unwrap();
    g.bench_function("trajectory_2_periods", |b| {
        b.iter(|| {
            orthogonal_trajectory(
                &built.family,
                black_box(Vec2::new(0.0, 1.0)),
                DEFAULT_LEVEL_FRACTION,
            )
            .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, self_contracted_check, flows, annuli, foliation);
criterion_main!(benches);
