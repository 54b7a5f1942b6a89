use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selfcontract_core::fields::{
    check_quasiconvex_sampled, CubicX, MaxAffine, NormField, QuadraticField, SpiralField,
};
use selfcontract_core::flow::{
    integrate_gradient, integrate_proximal, spiral_flow_config, winding_number, Method,
};
use selfcontract_core::{check_self_contracted, length, FlowConfig, Polyline, ScalarField, Vec2};

fn random_spd(rng: &mut ChaCha8Rng) -> QuadraticField {
    let (l1, l2) = (
        rng.gen_range(0.1f64.ln()..10f64.ln()).exp(),
        rng.gen_range(0.1f64.ln()..10f64.ln()).exp(),
    );
    let (s, c) = rng.gen_range(0.0..PI).sin_cos();
    let off = c * s * (l1 - l2);
    let a = [
        [c * c * l1 + s * s * l2, off],
        [off, s * s * l1 + c * c * l2],
    ];
    QuadraticField::new(a, Vec2::ZERO).unwrap()
}

fn random_max_affine(rng: &mut ChaCha8Rng) -> MaxAffine {
    let base = rng.gen_range(0.0..2.0 * PI);
    let pieces = (0..3)
        .map(|i| {
            let phi = base + 2.0 * PI * i as f64 / 3.0 + rng.gen_range(-0.3..0.3);
            (
                Vec2::from_polar(rng.gen_range(0.5..2.0), phi),
                rng.gen_range(-1.0..1.0),
            )
        })
        .collect();
    MaxAffine::new(pieces).unwrap()
}

/// Central difference of `f` at `x` with step `h`.
fn fd_gradient(f: &dyn ScalarField, x: Vec2, h: f64) -> Vec2 {
    let dx = Vec2::new(h, 0.0);
    let dy = Vec2::new(0.0, h);
    Vec2::new(
        (f.value(x + dx) - f.value(x - dx)) / (2.0 * h),
        (f.value(x + dy) - f.value(x - dy)) / (2.0 * h),
    )
}

/// `exp(-A t) x0` by a Taylor series with scaling and squaring.
fn expm_apply(a: [[f64; 2]; 2], t: f64, x0: Vec2) -> Vec2 {
    let mut k = 0;
    while (a[0][0].abs() + a[0][1].abs() + a[1][0].abs() + a[1][1].abs()) * t / 2f64.powi(k) > 0.2 {
        k += 1;
    }
    let s = -t / 2f64.powi(k);
    let m = [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]];
    let mul = |p: [[f64; 2]; 2], q: [[f64; 2]; 2]| {
        [
            [
                p[0][0] * q[0][0] + p[0][1] * q[1][0],
                p[0][0] * q[0][1] + p[0][1] * q[1][1],
            ],
            [
                p[1][0] * q[0][0] + p[1][1] * q[1][0],
                p[1][0] * q[0][1] + p[1][1] * q[1][1],
            ],
        ]
    };
    let mut e = [[1.0, 0.0], [0.0, 1.0]];
    let mut term = e;
    for n in 1..25 {
        term = mul(term, m);
        term = term.map(|r| r.map(|v| v / n as f64));
        for i in 0..2 {
            for j in 0..2 {
                e[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..k {
        e = mul(e, e);
    }
    Vec2::new(
        e[0][0] * x0.x + e[0][1] * x0.y,
        e[1][0] * x0.x + e[1][1] * x0.y,
    )
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let quad = random_spd(&mut rng);
    let maxa = random_max_affine(&mut rng);
    let fields: Vec<(&dyn ScalarField, f64, f64)> = vec![
        (&quad, 0.0, 2.0),
        (&SpiralField, 0.05, 2.0),
        (&CubicX, 0.0, 2.0),
        (&NormField, 0.01, 2.0),
        (&maxa, 0.0, 2.0),
    ];
    for (f, r_min, r_max) in fields {
        let mut checked = 0;
        while checked < 1000 {
            let x = Vec2::from_polar(rng.gen_range(r_min..r_max), rng.gen_range(0.0..2.0 * PI));
            let h = 1e-6 * (1.0 + x.norm());
            // Stay clear of kinks, where only one-sided derivatives exist.
            if f.kinks().iter().any(|k| k.dist(x) < 1e-3) || near_ridge(f, x, h) {
                continue;
            }
            checked += 1;
            let g = f.gradient(x);
            let fd = fd_gradient(f, x, h);
            let scale = g.norm().max(1e-300);
            assert!(
                (g - fd).norm() <= 1e-5 * scale,
                "{} at {x}: analytic {g}, finite difference {fd}",
                f.name()
            );
        }
    }
}

/// True when a central difference at `x` straddles a ridge between affine
/// pieces: the gradient changes across the stencil.
fn near_ridge(f: &dyn ScalarField, x: Vec2, h: f64) -> bool {
    let g = f.gradient(x);
    [Vec2::new(h, 0.0), Vec2::new(0.0, h)]
        .iter()
        .any(|&d| f.gradient(x + d * 2.0) != g || f.gradient(x - d * 2.0) != g)
        && f.name().starts_with("max")
}

#[test]
fn quadratic_orbits_follow_the_matrix_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let cfg = FlowConfig {
        method: Method::Adaptive,
        tolerance: 1e-9,
        t_max: 5.0,
        sample_spacing: Some(0.01),
        stop_gradient_norm: 0.0,
        ..FlowConfig::default()
    };
    for _ in 0..20 {
        let f = random_spd(&mut rng);
        let x0 = Vec2::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.0..2.0 * PI));
        let orbit = integrate_gradient(&f, x0, &cfg).unwrap();
        let (mut err, mut scale) = (0.0_f64, 0.0_f64);
        for (&t, &x) in orbit.polyline.params().iter().zip(orbit.polyline.points()) {
            let exact = expm_apply(f.a, t, x0);
            err = err.max(x.dist(exact));
            scale = scale.max(exact.norm());
        }
        assert!(err / scale <= 1e-6, "relative sup error {}", err / scale);
    }
}

#[test]
fn values_decrease_along_orbits() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = FlowConfig {
        t_max: 3.0,
        ..FlowConfig::default()
    };
    let slack = 10.0 * cfg.tolerance;
    let quad = random_spd(&mut rng);
    let cases: Vec<(&dyn ScalarField, Vec2, FlowConfig)> = vec![
        (&quad, Vec2::new(0.7, -0.4), cfg),
        (
            &CubicX,
            Vec2::new(0.5, 0.2),
            FlowConfig { t_max: 1.0, ..cfg },
        ),
        (
            &SpiralField,
            Vec2::new(2.0 / (3.0 * PI), 0.0),
            spiral_flow_config(50.0),
        ),
    ];
    for (f, x0, cfg) in cases {
        let orbit = integrate_gradient(f, x0, &cfg).unwrap();
        let fs = &orbit.f_values;
        assert!(fs.len() > 10);
        for w in fs.windows(2) {
            assert!(
                w[1] <= w[0] + slack * w[0].abs().max(1e-300),
                "{}: {} -> {}",
                f.name(),
                w[0],
                w[1]
            );
        }
        assert!(fs[fs.len() - 1] < fs[0]);
    }
}

#[test]
fn quasiconvex_orbits_are_self_contracted() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let cfg = FlowConfig::default();
    for k in 0..40 {
        let x0 = Vec2::from_polar(rng.gen_range(0.1..1.0), rng.gen_range(0.0..2.0 * PI));
        let quad = random_spd(&mut rng);
        let (f, x0): (&dyn ScalarField, Vec2) = if k % 4 == 0 {
            // For x < 0 the flow of x^3 escapes to infinity in finite time.
            (&CubicX, Vec2::new(x0.x.abs(), x0.y))
        } else {
            (&quad, x0)
        };
        let orbit = integrate_gradient(f, x0, &cfg).unwrap();
        let v = check_self_contracted(&orbit.polyline, 10.0 * cfg.tolerance).unwrap();
        assert!(
            v.is_self_contracted,
            "{} from {x0}: {:?}",
            f.name(),
            v.witness
        );
    }
}

#[test]
fn proximal_distances_to_later_iterates_shrink() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let quad = random_spd(&mut rng);
    let maxa = random_max_affine(&mut rng);
    let fields: [&dyn ScalarField; 3] = [&quad, &NormField, &maxa];
    for f in fields {
        let x0 = Vec2::from_polar(2.0, rng.gen_range(0.0..2.0 * PI));
        let orbit = integrate_proximal(f, x0, 0.1, 80).unwrap();
        let pts = orbit.polyline.points();
        for (big_k, &xk) in pts.iter().enumerate() {
            for k in 1..=big_k {
                let (before, after) = (pts[k - 1].dist(xk), pts[k].dist(xk));
                assert!(
                    after <= before + 1e-12,
                    "{}: dist to x_{big_k} grows at {k}",
                    f.name()
                );
            }
        }
    }
}

#[test]
fn spiral_is_not_quasiconvex() {
    let v = check_quasiconvex_sampled(&SpiralField, 20_000, 0.5, 7);
    assert!(!v.passed);
    let (x, y) = v.counterexample.unwrap();
    let f = SpiralField;
    assert!(f.scaled_gradient(x).dot(y - x) > 0.0);
    assert!(f.value(y) < f.value(x));
}

#[test]
fn spiral_length_tracks_the_reference_curve() {
    let a = 1.5 * PI;
    // Arc length of r = 1/(a + s), theta = -s, by the midpoint rule.
    let reference = |t: f64| {
        let n = 100_000;
        let h = t / n as f64;
        (0..n)
            .map(|i| {
                let u = a + (i as f64 + 0.5) * h;
                (1.0 / u.powi(4) + 1.0 / (u * u)).sqrt() * h
            })
            .sum::<f64>()
    };
    let orbit = integrate_gradient(
        &SpiralField,
        Vec2::new(1.0 / a, 0.0),
        &spiral_flow_config(300.0),
    )
    .unwrap();
    let mut prev = 0.0;
    for t in [3.0, 10.0, 30.0, 100.0, 300.0] {
        let l = length(&orbit.truncated(t).unwrap().polyline);
        let r = reference(t);
        assert!(l > prev, "length stalls at t = {t}");
        assert!(
            (l / r - 1.0).abs() < 0.1,
            "t = {t}: length {l}, reference {r}"
        );
        prev = l;
    }
}

#[test]
fn winding_counts_turns() {
    let circle: Vec<Vec2> = (0..=64)
        .map(|k| Vec2::unit(2.0 * PI * k as f64 / 64.0))
        .collect();
    let c = Polyline::from_points(circle.clone()).unwrap();
    assert!((winding_number(&c, Vec2::ZERO).unwrap() - 1.0).abs() < 1e-12);
    let rev = Polyline::from_points(circle.into_iter().rev().collect()).unwrap();
    assert!((winding_number(&rev, Vec2::ZERO).unwrap() + 1.0).abs() < 1e-12);
    assert!(winding_number(&c, Vec2::new(3.0, 0.0)).unwrap().abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_iterates_of_the_norm_reach_the_origin(x in -3.0..3.0f64, y in -3.0..3.0f64, h in 0.05..1.0f64) {
        let x0 = Vec2::new(x, y);
        let n = (x0.norm() / h).ceil() as usize + 2;
        let orbit = integrate_proximal(&NormField, x0, h, n).unwrap();
        prop_assert!(orbit.polyline.last().norm() <= 1e-12);
        prop_assert!(check_self_contracted(&orbit.polyline, 1e-12).unwrap().is_self_contracted);
    }
}
