use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selfcontract_core::curve::{check_self_contracted_bruteforce, LENGTH_BOUND_FACTOR};
use selfcontract_core::io::{read_polyline_csv, write_polyline_csv};
use selfcontract_core::{check_main_bound, check_self_contracted, Polyline, Vec2};

/// A self-contracted polyline grown backwards from its endpoint: each new
/// first point must be at least as far from every later point as the current
/// first point is. Outside the union of those balls any step works, so the
/// step grows until a random direction succeeds.
fn grown_backwards(seed: u64, n: usize) -> Vec<Vec2> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = vec![Vec2::ZERO, Vec2::unit(rng.gen_range(0.0..2.0 * PI)) * 0.1];
    let spread = rng.gen_range(0.1..1.5);
    while pts.len() < n {
        let head = pts[pts.len() - 1];
        let prev = pts[pts.len() - 2];
        let heading = (head - prev).angle();
        let mut step = rng.gen_range(0.02..0.2);
        let next = loop {
            let cand = head + Vec2::unit(heading + rng.gen_range(-spread..spread)) * step;
            if pts[..pts.len() - 1]
                .iter()
                .all(|&p| cand.dist(p) >= head.dist(p))
            {
                break cand;
            }
            step *= 1.5;
        };
        pts.push(next);
    }
    pts.reverse();
    pts
}

fn polyline(pts: Vec<Vec2>) -> Polyline {
    Polyline::from_points(pts).unwrap()
}

fn point() -> impl Strategy<Value = Vec2> {
    prop_oneof![
        // Coarse lattice points create exact distance ties.
        (-4i32..=4, -4i32..=4).prop_map(|(a, b)| Vec2::new(a as f64 / 4.0, b as f64 / 4.0)),
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y)| Vec2::new(x, y)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sweep_agrees_with_enumeration(pts in prop::collection::vec(point(), 1..=60), tol in prop_oneof![Just(0.0), Just(1e-9), Just(1e-3)]) {
        let c = polyline(pts);
        let fast = check_self_contracted(&c, tol).unwrap();
        let slow = check_self_contracted_bruteforce(&c, tol).unwrap();
        prop_assert_eq!(fast.is_self_contracted, slow.is_self_contracted);
        prop_assert!((fast.slack - slow.slack).abs() <= 1e-15);
    }

    #[test]
    fn grown_curves_are_self_contracted(seed in any::<u64>(), n in 2usize..=60) {
        let pts = grown_backwards(seed, n);
        let c = polyline(pts.clone());
        let v = check_self_contracted(&c, 0.0).unwrap();
        prop_assert!(v.is_self_contracted, "witness {:?}", v.witness);
        prop_assert!(check_self_contracted_bruteforce(&c, 0.0).unwrap().is_self_contracted);

        let last = pts[pts.len() - 1];
        let gap = pts[0].dist(last);
        for w in pts.windows(2) {
            // Distance to the limit point never increases.
            prop_assert!(w[1].dist(last) <= w[0].dist(last));
        }
        // The image lies in the ball about the endpoint of radius the gap.
        prop_assert!(pts.iter().all(|p| p.dist(last) <= gap));

        let b = check_main_bound(&c);
        prop_assert!(b.holds, "length {} > {} * gap {}", b.length, LENGTH_BOUND_FACTOR, b.gap);
    }

    #[test]
    fn subcurves_stay_self_contracted(seed in any::<u64>(), n in 3usize..=40, cut in (0.0..1.0f64, 0.0..1.0f64)) {
        let c = polyline(grown_backwards(seed, n));
        let (a, b) = ((cut.0 * n as f64) as usize, (cut.1 * n as f64) as usize);
        let (lo, hi) = (a.min(b), a.max(b) + 1);
        let sub = c.slice(lo..hi.min(n)).unwrap();
        prop_assert!(check_self_contracted(&sub, 0.0).unwrap().is_self_contracted);
    }

    #[test]
    fn csv_roundtrip_is_lossless(raw in prop::collection::vec((any::<f64>(), any::<f64>()), 1..50)) {
        let pts: Vec<Vec2> = raw
            .into_iter()
            .map(|(x, y)| Vec2::new(if x.is_finite() { x } else { 0.5 }, if y.is_finite() { y } else { -0.25 }))
            .collect();
        let c = polyline(pts);
        let mut buf = Vec::new();
        write_polyline_csv(&c, &mut buf).unwrap();
        let back = read_polyline_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.points(), c.points());
        prop_assert_eq!(back.params(), c.params());
    }

    #[test]
    fn parameters_do_not_matter(pts in prop::collection::vec(point(), 2..=30), scale in 0.1..10.0f64) {
        let c = polyline(pts.clone());
        let params: Vec<f64> = (0..pts.len()).map(|i| (i as f64).powi(2) * scale).collect();
        let d = Polyline::new(params, pts).unwrap();
        prop_assert_eq!(
            check_self_contracted(&c, 0.0).unwrap().is_self_contracted,
            check_self_contracted(&d, 0.0).unwrap().is_self_contracted
        );
    }
}

#[test]
fn reversal_can_break_self_contractedness() {
    // Search the grown family for a curve whose reversal fails.
    let found = (0..500u64).find_map(|seed| {
        let pts = grown_backwards(seed, 12);
        let rev: Vec<Vec2> = pts.iter().rev().copied().collect();
        let v = check_self_contracted(&polyline(rev.clone()), 1e-9).unwrap();
        v.witness.map(|w| (pts, rev, w))
    });
    let (pts, rev, [i, j, l]) = found.expect("no reversal witness among 500 curves");
    assert!(
        check_self_contracted(&polyline(pts), 0.0)
            .unwrap()
            .is_self_contracted
    );
    assert!(i <= j && j <= l);
    assert!(rev[j].dist(rev[l]) > rev[i].dist(rev[l]) + 1e-9);
}

#[test]
fn witness_is_a_real_violation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let pts: Vec<Vec2> = (0..20).map(|_| Vec2::new(rng.gen(), rng.gen())).collect();
        let v = check_self_contracted(&polyline(pts.clone()), 1e-6).unwrap();
        if let Some([i, j, l]) = v.witness {
            assert!(i <= j && j <= l);
            assert!(pts[j].dist(pts[l]) > pts[i].dist(pts[l]) + 1e-6);
            assert!((pts[i].dist(pts[l]) - pts[j].dist(pts[l]) - v.slack).abs() < 1e-12);
        } else {
            assert!(v.slack >= -1e-6);
        }
    }
}

#[test]
fn tolerance_absorbs_small_backtracking() {
    // A straight run whose fourth sample steps back by 1e-10.
    let mut pts: Vec<Vec2> = (0..10)
        .map(|i| Vec2::new(1.0 - i as f64 / 9.0, 0.0))
        .collect();
    pts[3].x = pts[2].x + 1e-10;
    let c = polyline(pts);
    assert!(!check_self_contracted(&c, 0.0).unwrap().is_self_contracted);
    assert!(
        check_self_contracted(&c, c.default_tolerance() * 1e3)
            .unwrap()
            .is_self_contracted
    );
    assert!((c.default_tolerance() - 1e-9 * c.extent()).abs() < 1e-24);
}
