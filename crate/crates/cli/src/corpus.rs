//! Seeded generators for the experiment corpora.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use selfcontract_core::fields::{MaxAffine, QuadraticField};
use selfcontract_core::flow::{integrate_gradient, Method};
use selfcontract_core::{FlowConfig, Orbit, Polyline, Result, Vec2};

/// Independent stream `index` of a run seeded with `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform point of the closed disk of radius `r` about the origin.
pub fn point_in_disk<R: Rng>(rng: &mut R, r: f64) -> Vec2 {
    let rho = r * rng.gen::<f64>().sqrt();
    Vec2::from_polar(rho, rng.gen_range(0.0..2.0 * PI))
}

/// Uniform point of the annulus `inner <= |x| <= outer`.
pub fn point_in_annulus<R: Rng>(rng: &mut R, inner: f64, outer: f64) -> Vec2 {
    let rho = rng.gen_range(inner * inner..=outer * outer).sqrt();
    Vec2::from_polar(rho, rng.gen_range(0.0..2.0 * PI))
}

/// `R(phi) diag(l1, l2) R(phi)^T` with log-uniform eigenvalues in `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> QuadraticField {
    let (llo, lhi) = (lo.ln(), hi.ln());
    let l1 = rng.gen_range(llo..=lhi).exp();
    let l2 = rng.gen_range(llo..=lhi).exp();
    let phi = rng.gen_range(0.0..PI);
    let (s, c) = phi.sin_cos();
    let a = [
        [c * c * l1 + s * s * l2, c * s * (l1 - l2)],
        [c * s * (l1 - l2), s * s * l1 + c * c * l2],
    ];
    QuadraticField::new(a, Vec2::ZERO).expect("rotated positive diagonal is SPD")
}

/// Flow settings of the quadratic corpus: long enough for the slowest mode
/// (eigenvalue `0.1`) to contract by `e^-10`.
pub fn corpus_flow_config() -> FlowConfig {
    FlowConfig {
        method: Method::Adaptive,
        tolerance: 1e-11,
        t_max: 100.0,
        sample_spacing: Some(0.1),
        ..FlowConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct QuadraticCase {
    pub field: QuadraticField,
    pub x0: Vec2,
    pub orbit: Orbit,
}

/// `count` gradient orbits of random SPD quadratics with eigenvalues in
/// `[0.1, 10]`, started uniformly in the unit disk.
pub fn quadratic_corpus(seed: u64, count: usize) -> Result<Vec<QuadraticCase>> {
    let mut rng = stream(seed, 1);
    let cfg = corpus_flow_config();
    (0..count)
        .map(|_| {
            let field = random_spd(&mut rng, 0.1, 10.0);
            let mut x0 = point_in_disk(&mut rng, 1.0);
            while x0.norm() < 1e-3 {
                x0 = point_in_disk(&mut rng, 1.0);
            }
            let orbit = integrate_gradient(&field, x0, &cfg)?;
            Ok(QuadraticCase { field, x0, orbit })
        })
        .collect()
}

/// Random polyline with `n` points: either uniform in the unit square or a
/// jittered walk that roughly contracts toward its last point.
pub fn random_polyline<R: Rng>(rng: &mut R, n: usize) -> Polyline {
    let pts: Vec<Vec2> = if rng.gen_bool(0.5) {
        (0..n).map(|_| Vec2::new(rng.gen(), rng.gen())).collect()
    } else {
        // Built backwards from the endpoint with slowly growing radius.
        let mut r = 0.0;
        let mut th = rng.gen_range(0.0..2.0 * PI);
        let mut rev = vec![Vec2::ZERO];
        for _ in 1..n {
            r += rng.gen_range(0.0..0.1);
            th += rng.gen_range(-0.6..0.6);
            rev.push(Vec2::from_polar(r, th));
        }
        rev.reverse();
        rev
    };
    Polyline::from_points(pts).expect("finite points")
}

/// Polylines whose worst triple sits within a few tolerances of the
/// self-contracted threshold: a straight run into the endpoint with one
/// sample pushed back by `delta`, `delta` drawn around `tolerance`.
pub fn near_violating_polyline<R: Rng>(rng: &mut R, n: usize, tolerance: f64) -> Polyline {
    let dir = Vec2::unit(rng.gen_range(0.0..2.0 * PI));
    let mut pts: Vec<Vec2> = (0..n)
        .map(|k| dir * (1.0 - k as f64 / (n - 1) as f64))
        .collect();
    let j = rng.gen_range(1..n - 1);
    let delta = tolerance * rng.gen_range(0.0..3.0);
    // One spacing plus delta back puts p_j exactly delta farther from the
    // endpoint than p_{j-1}.
    let spacing = 1.0 / (n - 1) as f64;
    pts[j] += dir * (spacing + delta);
    Polyline::from_points(pts).expect("finite points")
}

/// Three affine pieces with a bounded minimum: outward normals spread
/// around the circle, offsets random, the whole picture shifted.
pub fn random_max_affine<R: Rng>(rng: &mut R) -> MaxAffine {
    loop {
        let base = rng.gen_range(0.0..2.0 * PI);
        let shift = point_in_disk(rng, 1.0);
        let pieces: Vec<(Vec2, f64)> = (0..3)
            .map(|i| {
                let phi = base + 2.0 * PI * i as f64 / 3.0 + rng.gen_range(-0.4..0.4);
                let a = Vec2::unit(phi) * rng.gen_range(0.5..2.0);
                let b = rng.gen_range(-0.5..0.5) - a.dot(shift);
                (a, b)
            })
            .collect();
        if let Ok(f) = MaxAffine::new(pieces) {
            return f;
        }
    }
}
