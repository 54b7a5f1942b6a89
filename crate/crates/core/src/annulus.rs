//! Annulus decomposition of a curve converging to a center point.
//!
//! Segments inside `U(lambda R, R)` are classified by the angle `theta` at
//! their midpoint `m` between `m -> O` and `m -> q`, `q` being the endpoint
//! nearer to `O`. Vertical segments make radial progress, so their total
//! length is controlled by the annulus width; horizontal ones are charged
//! against arcs of the inner circle through the projection `pi`, which sends
//! `x` along the half-line leaving `x` at angle `alpha` from `x -> O`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::curve::{length, Polyline, LENGTH_BOUND_FACTOR};
use crate::error::{Error, Result};
use crate::geom::{line_circle_params, wrap_angle, Vec2};

/// Relative slack used for annulus membership.
const MEMBERSHIP_RTOL: f64 = 1e-9;

/// Maximum bisection depth when refining long segments.
pub const MAX_REFINE_DEPTH: u32 = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusParams {
    pub alpha: f64,
    pub lambda: f64,
    pub outer_radius: f64,
    pub center: Vec2,
}

impl AnnulusParams {
    /// Requires `0 < alpha < pi/2`, `sin(alpha) < lambda < 1` and `R > 0`.
    pub fn new(alpha: f64, lambda: f64, outer_radius: f64) -> Result<Self> {
        Self::with_center(alpha, lambda, outer_radius, Vec2::ZERO)
    }

    pub fn with_center(alpha: f64, lambda: f64, outer_radius: f64, center: Vec2) -> Result<Self> {
        if !(alpha > 0.0 && alpha < FRAC_PI_2) {
            return Err(Error::InvalidAnnulus(format!(
                "alpha = {alpha} not in (0, pi/2)"
            )));
        }
        if !(lambda > alpha.sin() && lambda < 1.0) {
            return Err(Error::InvalidAnnulus(format!(
                "lambda = {lambda} not in (sin alpha, 1) = ({}, 1)",
                alpha.sin()
            )));
        }
        if !(outer_radius > 0.0 && outer_radius.is_finite()) {
            return Err(Error::InvalidAnnulus(format!(
                "outer radius {outer_radius} must be > 0"
            )));
        }
        if !center.is_finite() {
            return Err(Error::InvalidAnnulus("non-finite center".into()));
        }
        Ok(Self {
            alpha,
            lambda,
            outer_radius,
            center,
        })
    }

    pub fn inner_radius(&self) -> f64 {
        self.lambda * self.outer_radius
    }

    /// `Delta R = (1 - lambda) R`.
    pub fn width(&self) -> f64 {
        (1.0 - self.lambda) * self.outer_radius
    }

    fn slack(&self) -> f64 {
        MEMBERSHIP_RTOL * self.outer_radius
    }

    /// Membership in the closed annulus, up to a relative slack of `1e-9`.
    pub fn contains(&self, x: Vec2) -> bool {
        let r = x.dist(self.center);
        r >= self.inner_radius() - self.slack() && r <= self.outer_radius + self.slack()
    }

    fn require(&self, x: Vec2) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::OutOfAnnulus {
                point: x,
                radius: x.dist(self.center),
                inner: self.inner_radius(),
                outer: self.outer_radius,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Vertical,
    HorizontalPositive,
    HorizontalNegative,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Vertical => "vertical",
            SegmentKind::HorizontalPositive => "horizontal_positive",
            SegmentKind::HorizontalNegative => "horizontal_negative",
        }
    }

    pub fn is_horizontal(self) -> bool {
        self != SegmentKind::Vertical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedSegment {
    /// Endpoint farther from the center.
    pub p: Vec2,
    /// Endpoint nearer to the center.
    pub q: Vec2,
    pub m: Vec2,
    pub theta: f64,
    pub kind: SegmentKind,
}

impl ClassifiedSegment {
    pub fn length(&self) -> f64 {
        self.p.dist(self.q)
    }
}

/// Orders `(p, q)` so that `q` is the endpoint nearer to `center`.
fn order_by_radius(p: Vec2, q: Vec2, center: Vec2) -> (Vec2, Vec2) {
    if q.dist(center) > p.dist(center) {
        (q, p)
    } else {
        (p, q)
    }
}

/// Signed angle at the midpoint between `m -> center` and `m -> q`,
/// counterclockwise positive, in `[-pi/2, pi/2]`.
pub fn segment_theta(p: Vec2, q: Vec2, center: Vec2) -> Result<f64> {
    if p == q {
        return Err(Error::DegenerateSegment(p));
    }
    let (p, q) = order_by_radius(p, q, center);
    if q == center {
        // Limit along the ray through p.
        return Ok(0.0);
    }
    let m = p.midpoint(q);
    let to_center = center - m;
    if to_center.norm() <= 1e-15 * p.dist(center).max(f64::MIN_POSITIVE) {
        return Err(Error::SingularMidpoint);
    }
    let to_q = q - m;
    // dot(to_center, to_q) >= 0 because q is the nearer endpoint; clamp away
    // rounding below zero.
    let theta = to_center.cross(to_q).atan2(to_center.dot(to_q));
    Ok(theta.clamp(-FRAC_PI_2, FRAC_PI_2))
}

/// Kind for a given `theta`. The boundaries `+-(pi/2 - alpha)` belong to the
/// horizontal classes.
pub fn kind_for_theta(theta: f64, alpha: f64) -> SegmentKind {
    let edge = FRAC_PI_2 - alpha;
    if theta <= -edge {
        SegmentKind::HorizontalPositive
    } else if theta >= edge {
        SegmentKind::HorizontalNegative
    } else {
        SegmentKind::Vertical
    }
}

pub fn classify_segment(p: Vec2, q: Vec2, params: &AnnulusParams) -> Result<ClassifiedSegment> {
    params.require(p)?;
    params.require(q)?;
    let theta = segment_theta(p, q, params.center)?;
    let (p, q) = order_by_radius(p, q, params.center);
    Ok(ClassifiedSegment {
        p,
        q,
        m: p.midpoint(q),
        theta,
        kind: kind_for_theta(theta, params.alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentEstimate {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Both sides of `length <= 2 / cos(theta) * |dist(O,p) - dist(O,q)|`.
pub fn segment_length_estimate(seg: &ClassifiedSegment, center: Vec2) -> Result<SegmentEstimate> {
    if seg.theta.abs() >= FRAC_PI_2 - 1e-12 {
        return Err(Error::UndefinedEstimate);
    }
    let lhs = seg.length();
    let rhs = 2.0 / seg.theta.cos() * (seg.p.dist(center) - seg.q.dist(center)).abs();
    Ok(SegmentEstimate {
        lhs,
        rhs,
        holds: lhs <= rhs + 10.0 * f64::EPSILON * lhs.max(rhs),
    })
}

/// Which way the projecting half-line turns from `x -> O`. Positive-pointing
/// horizontal segments use `+alpha`; the mirrored construction with `-alpha`
/// serves negative-pointing ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn for_kind(kind: SegmentKind) -> Option<Self> {
        match kind {
            SegmentKind::HorizontalPositive => Some(Orientation::Positive),
            SegmentKind::HorizontalNegative => Some(Orientation::Negative),
            SegmentKind::Vertical => None,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// Closed half-plane `{z : <normal, z - point> >= 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub point: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    pub fn signed_distance(&self, z: Vec2) -> f64 {
        self.normal.dot(z - self.point)
    }

    pub fn contains(&self, z: Vec2, tol: f64) -> bool {
        self.signed_distance(z) >= -tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub x: Vec2,
    /// Unit direction of the half-line `L_x`.
    pub direction: Vec2,
    /// Near intersection with the inner circle; `Delta_x = [x, pi_x]`.
    pub pi_x: Vec2,
    pub pi_prime_x: Vec2,
    /// Half-plane bounded by the line through `L_x`, containing the center.
    pub half_plane: HalfPlane,
}

pub fn project_pi(x: Vec2, params: &AnnulusParams) -> Result<Projection> {
    project_pi_oriented(x, params, Orientation::Positive)
}

pub fn project_pi_oriented(
    x: Vec2,
    params: &AnnulusParams,
    orientation: Orientation,
) -> Result<Projection> {
    params.require(x)?;
    let c = params.center;
    let to_center = (c - x)
        .normalized()
        .ok_or_else(|| Error::Geometry("projection of the center".into()))?;
    let direction = to_center.rotate(orientation.sign() * params.alpha);
    let (s1, s2) = line_circle_params(x, direction, c, params.inner_radius())
        .ok_or_else(|| Error::Geometry(format!("half-line from {x} misses the inner circle")))?;
    if s2 < 0.0 {
        return Err(Error::Geometry(format!("inner circle lies behind {x}")));
    }
    let s1 = s1.max(0.0);
    let mut normal = direction.perp();
    if normal.dot(c - x) < 0.0 {
        normal = -normal;
    }
    Ok(Projection {
        x,
        direction,
        pi_x: x + direction * s1,
        pi_prime_x: x + direction * s2,
        half_plane: HalfPlane { point: x, normal },
    })
}

/// Grid estimate of the closeness radius `eta`: half the smallest distance
/// between two sampled points of the annulus at which one of
///
/// - `dist(x, pi(y)) < dist(x, pi'(y))`
/// - `dist(pi(x), pi(y)) < dist(pi(x), pi'(x))`
/// - `dist(pi(x), pi(y)) < dist(pi(x), pi'(y))`
///
/// fails. The grid is polar with `density` radii and `density` angles; by
/// rotational symmetry `x` only ranges over one ray. Valid at the sampled
/// resolution only.
pub fn eta_for_annulus(params: &AnnulusParams, sample_density: usize) -> f64 {
    let n = sample_density.max(2);
    let c = params.center;
    let radii: Vec<f64> = (0..n)
        .map(|a| params.inner_radius() + params.width() * a as f64 / (n - 1) as f64)
        .collect();
    let mut grid = Vec::with_capacity(n * n);
    for &r in &radii {
        for b in 0..n {
            let x = c + Vec2::from_polar(r, 2.0 * PI * b as f64 / n as f64);
            // Grid points are inside the annulus and sin(alpha) < lambda, so
            // the projection exists.
            if let Ok(pr) = project_pi(x, params) {
                grid.push(pr);
            }
        }
    }
    let mut worst = f64::INFINITY;
    for (ia, _) in radii.iter().enumerate() {
        let px = &grid[ia * n];
        for py in &grid {
            let d = px.x.dist(py.x);
            if d >= worst || d == 0.0 {
                continue;
            }
            let ok = px.x.dist(py.pi_x) < px.x.dist(py.pi_prime_x)
                && px.pi_x.dist(py.pi_x) < px.pi_x.dist(px.pi_prime_x)
                && px.pi_x.dist(py.pi_x) < px.pi_x.dist(py.pi_prime_x);
            if !ok {
                worst = d;
            }
        }
    }
    if worst.is_finite() {
        0.5 * worst
    } else {
        params.outer_radius
    }
}

/// Polygonal approximation of a curve lying in the annulus with nonincreasing
/// distance to the center. Zero-length steps are dropped; steps longer than
/// `eta` are bisected along the polyline. Each piece is classified, with `q`
/// the endpoint nearer the center.
pub fn polygonal_approximation(
    curve: &Polyline,
    params: &AnnulusParams,
    eta: f64,
) -> Result<Vec<ClassifiedSegment>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidAnnulus(format!("eta = {eta} must be > 0")));
    }
    let pts = curve.points();
    for &p in pts {
        params.require(p)?;
    }
    let slack = params.slack();
    for (i, w) in pts.windows(2).enumerate() {
        let (r0, r1) = (w[0].dist(params.center), w[1].dist(params.center));
        if r1 > r0 + slack {
            return Err(Error::NonMonotoneRadius {
                index: i + 1,
                from: r0,
                to: r1,
            });
        }
    }
    let mut out = Vec::new();
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        let mut depth = 0u32;
        while len / f64::powi(2.0, depth as i32) > eta {
            depth += 1;
            if depth > MAX_REFINE_DEPTH {
                return Err(Error::RefinementDepth {
                    eta,
                    depth: MAX_REFINE_DEPTH,
                });
            }
        }
        let pieces = 1usize << depth;
        let mut prev = a;
        for k in 1..=pieces {
            let next = if k == pieces {
                b
            } else {
                a.lerp(b, k as f64 / pieces as f64)
            };
            if next != prev {
                out.push(classify_in_curve_order(prev, next, params)?);
            }
            prev = next;
        }
    }
    Ok(out)
}

/// Keeps curve order when radii tie within the membership slack.
fn classify_in_curve_order(a: Vec2, b: Vec2, params: &AnnulusParams) -> Result<ClassifiedSegment> {
    let mut seg = classify_segment(a, b, params)?;
    if seg.p != a && (a.dist(params.center) - b.dist(params.center)).abs() <= params.slack() {
        // Equal radii up to rounding: label in curve order.
        let theta = segment_theta_ordered(a, b, params.center)?;
        seg = ClassifiedSegment {
            p: a,
            q: b,
            m: a.midpoint(b),
            theta,
            kind: kind_for_theta(theta, params.alpha),
        };
    }
    Ok(seg)
}

fn segment_theta_ordered(p: Vec2, q: Vec2, center: Vec2) -> Result<f64> {
    let m = p.midpoint(q);
    let to_center = center - m;
    if to_center.norm() == 0.0 {
        return Err(Error::SingularMidpoint);
    }
    let to_q = q - m;
    Ok(to_center
        .cross(to_q)
        .atan2(to_center.dot(to_q))
        .clamp(-FRAC_PI_2, FRAC_PI_2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalBound {
    pub sum_vertical: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Total vertical length against `2 / cos(alpha) * Delta R`.
pub fn vertical_bound_check(
    segments: &[ClassifiedSegment],
    params: &AnnulusParams,
) -> VerticalBound {
    let sum_vertical: f64 = segments
        .iter()
        .filter(|s| s.kind == SegmentKind::Vertical)
        .map(ClassifiedSegment::length)
        .sum();
    let bound = 2.0 / params.alpha.cos() * params.width();
    VerticalBound {
        sum_vertical,
        bound,
        holds: sum_vertical <= bound + params.slack(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalBound {
    pub sum_horizontal: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Total horizontal length against `8 pi / (1 - lambda) * Delta R`.
pub fn horizontal_bound_check(
    segments: &[ClassifiedSegment],
    params: &AnnulusParams,
) -> HorizontalBound {
    let sum_horizontal: f64 = segments
        .iter()
        .filter(|s| s.kind.is_horizontal())
        .map(ClassifiedSegment::length)
        .sum();
    let bound = 8.0 * PI / (1.0 - params.lambda) * params.width();
    HorizontalBound {
        sum_horizontal,
        bound,
        holds: sum_horizontal <= bound + params.slack(),
    }
}

/// Arc of the inner circle, `start` plus a counterclockwise `sweep >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: f64,
    pub sweep: f64,
}

impl Arc {
    fn between(a: f64, b: f64) -> Arc {
        let d = wrap_angle(b - a);
        if d >= 0.0 {
            Arc { start: a, sweep: d }
        } else {
            Arc {
                start: b,
                sweep: -d,
            }
        }
    }

    /// True when the arcs share more than `tol` radians.
    pub fn overlaps(&self, other: &Arc, tol: f64) -> bool {
        let ahead = (other.start - self.start).rem_euclid(2.0 * PI);
        let behind = (self.start - other.start).rem_euclid(2.0 * PI);
        ahead < self.sweep - tol || behind < other.sweep - tol
    }
}

/// Image under `pi` of the first half `[p, m]` of a horizontal segment, as an
/// angular interval of the inner circle. The orientation follows the kind.
pub fn projected_half_arc(seg: &ClassifiedSegment, params: &AnnulusParams) -> Result<Arc> {
    let orientation = Orientation::for_kind(seg.kind)
        .ok_or_else(|| Error::Geometry("vertical segments have no projected arc".into()))?;
    let a = project_pi_oriented(seg.p, params, orientation)?.pi_x - params.center;
    let b = project_pi_oriented(seg.m, params, orientation)?.pi_x - params.center;
    Ok(Arc::between(a.angle(), b.angle()))
}

/// Pairs `(i, j)` of same-kind horizontal segments whose half-arcs overlap.
/// Empty for approximations of self-contracted curves.
pub fn overlapping_half_arcs(
    segments: &[ClassifiedSegment],
    params: &AnnulusParams,
    tol: f64,
) -> Result<Vec<(usize, usize)>> {
    let arcs: Vec<Option<(SegmentKind, Arc)>> = segments
        .iter()
        .map(|s| {
            if s.kind.is_horizontal() {
                projected_half_arc(s, params).map(|a| Some((s.kind, a)))
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let mut bad = Vec::new();
    for i in 0..arcs.len() {
        let Some((ki, ai)) = arcs[i] else { continue };
        for (j, aj) in arcs.iter().enumerate().skip(i + 1) {
            if let Some((kj, aj)) = aj {
                if ki == *kj && ai.overlaps(aj, tol) {
                    bad.push((i, j));
                }
            }
        }
    }
    Ok(bad)
}

/// Maximal pieces of the polyline inside the closed annulus
/// `inner <= |x - center| <= outer`, split exactly at the boundary circles.
pub fn clip_to_annulus(curve: &Polyline, center: Vec2, inner: f64, outer: f64) -> Vec<Polyline> {
    let pts = curve.points();
    let ts = curve.params();
    let inside = |x: Vec2| {
        let r = x.dist(center);
        r >= inner && r <= outer
    };
    if pts.len() == 1 {
        return if inside(pts[0]) {
            vec![curve.clone()]
        } else {
            Vec::new()
        };
    }
    let mut pieces = Vec::new();
    let mut cur_t: Vec<f64> = Vec::new();
    let mut cur_p: Vec<Vec2> = Vec::new();
    let flush = |cur_t: &mut Vec<f64>, cur_p: &mut Vec<Vec2>, pieces: &mut Vec<Polyline>| {
        if cur_p.len() >= 2 {
            if let Ok(pl) = Polyline::new(std::mem::take(cur_t), std::mem::take(cur_p)) {
                pieces.push(pl);
            }
        }
        cur_t.clear();
        cur_p.clear();
    };
    for i in 0..pts.len() - 1 {
        let (a, b) = (pts[i], pts[i + 1]);
        let d = b - a;
        let intervals = if d.norm_sq() == 0.0 {
            if inside(a) {
                vec![((0.0, None), (1.0, None))]
            } else {
                Vec::new()
            }
        } else {
            inside_intervals(a, d, center, inner, outer)
        };
        for ((lo, lo_circle), (hi, hi_circle)) in intervals {
            let at = |s: f64, circle: Option<f64>| {
                let p = match circle {
                    Some(radius) => circle_crossing(a, d, center, radius, s),
                    None if s == 0.0 => a,
                    None if s == 1.0 => b,
                    None => a + d * s,
                };
                (ts[i] + s * (ts[i + 1] - ts[i]), p)
            };
            let (t0, p0) = at(lo, lo_circle);
            let (t1, p1) = at(hi, hi_circle);
            let continues = lo == 0.0 && cur_t.last() == Some(&t0);
            if !continues {
                flush(&mut cur_t, &mut cur_p, &mut pieces);
                cur_t.push(t0);
                cur_p.push(p0);
            }
            if t1 > *cur_t.last().unwrap() {
                cur_t.push(t1);
                cur_p.push(p1);
            }
            if hi < 1.0 {
                flush(&mut cur_t, &mut cur_p, &mut pieces);
            }
        }
    }
    flush(&mut cur_t, &mut cur_p, &mut pieces);
    pieces
}

/// End of a clipped interval: its parameter and, for a circle crossing, the
/// radius of the circle crossed.
type IntervalEnd = (f64, Option<f64>);

/// Sub-intervals of `[0, 1]` where `a + s d` lies in the closed annulus.
fn inside_intervals(
    a: Vec2,
    d: Vec2,
    center: Vec2,
    inner: f64,
    outer: f64,
) -> Vec<(IntervalEnd, IntervalEnd)> {
    let Some((o1, o2)) = line_circle_params(a, d, center, outer) else {
        return Vec::new();
    };
    let lo = if o1 > 0.0 {
        (o1, Some(outer))
    } else {
        (0.0, None)
    };
    let hi = if o2 < 1.0 {
        (o2, Some(outer))
    } else {
        (1.0, None)
    };
    if lo.0 >= hi.0 {
        return Vec::new();
    }
    match line_circle_params(a, d, center, inner) {
        Some((i1, i2)) if i2 > i1 => {
            let mut out = Vec::with_capacity(2);
            if i1 > lo.0 {
                out.push((lo, if i1 < hi.0 { (i1, Some(inner)) } else { hi }));
            }
            if i2 < hi.0 {
                out.push((if i2 > lo.0 { (i2, Some(inner)) } else { lo }, hi));
            }
            out.retain(|(x, y)| y.0 > x.0);
            out
        }
        _ => vec![(lo, hi)],
    }
}

/// Point where the line `a + s d` crosses the circle of the given radius,
/// on the side of the foot of the perpendicular that `s` lies on. Built from
/// the foot, so it sits on the circle up to rounding even when the root `s`
/// is poorly conditioned (long segments near a small circle).
fn circle_crossing(a: Vec2, d: Vec2, center: Vec2, radius: f64, s: f64) -> Vec2 {
    let len = d.norm();
    let u = d / len;
    let w = a - center;
    let along = w.dot(u);
    let h = u.cross(w);
    let half = (radius * radius - h * h).max(0.0).sqrt();
    let side = if s * len + along >= 0.0 { 1.0 } else { -1.0 };
    center + u.perp() * h + u * (side * half)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusEstimate {
    pub restricted_length: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Length of the curve inside the annulus against `(8 pi + 2) * Delta R`.
pub fn annulus_length_estimate(curve: &Polyline, params: &AnnulusParams) -> AnnulusEstimate {
    let restricted_length: f64 = clip_to_annulus(
        curve,
        params.center,
        params.inner_radius(),
        params.outer_radius,
    )
    .iter()
    .map(length)
    .sum();
    let bound = LENGTH_BOUND_FACTOR * params.width();
    AnnulusEstimate {
        restricted_length,
        bound,
        holds: restricted_length <= bound + params.slack(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusRecord {
    pub outer: f64,
    pub inner: f64,
    pub width: f64,
    pub restricted_length: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullBound {
    pub initial_radius: f64,
    pub annuli: Vec<AnnulusRecord>,
    pub total_by_annuli: f64,
    /// Sum of the annulus widths; equals `R0` minus the innermost radius.
    pub width_sum: f64,
    /// Curve length not attributed to any annulus (inside the last inner
    /// circle, or outside `B(center, R0)`).
    pub residual_length: f64,
    pub bound: f64,
    pub holds: bool,
}

const MAX_ANNULI: usize = 4096;

/// Annuli cut at `R_{i+1} = lambda R_i` from `R0 = dist(center, first)`.
pub fn full_length_bound(
    curve: &Polyline,
    lambda: f64,
    center: Vec2,
    convergence_tol: f64,
) -> Result<FullBound> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidAnnulus(format!(
            "lambda = {lambda} not in (0, 1)"
        )));
    }
    let final_dist = curve.last().dist(center);
    if final_dist > convergence_tol {
        return Err(Error::NotConverging {
            distance: final_dist,
            tolerance: convergence_tol,
        });
    }
    let r0 = curve.first().dist(center);
    let total_length = length(curve);
    let min_radius = curve
        .points()
        .windows(2)
        .map(|w| point_segment_distance(center, w[0], w[1]))
        .fold(final_dist, f64::min);
    let floor = (1e-12 * r0).max(min_radius);
    let mut annuli = Vec::new();
    let mut outer = r0;
    while outer > floor && annuli.len() < MAX_ANNULI {
        let inner = lambda * outer;
        let restricted: f64 = clip_to_annulus(curve, center, inner, outer)
            .iter()
            .map(length)
            .sum();
        let bound = LENGTH_BOUND_FACTOR * (outer - inner);
        annuli.push(AnnulusRecord {
            outer,
            inner,
            width: outer - inner,
            restricted_length: restricted,
            bound,
            holds: restricted <= bound + MEMBERSHIP_RTOL * outer,
        });
        outer = inner;
    }
    // Neighboring closed annuli share their boundary circle; a curve running
    // along it would be counted twice, which only makes the check stricter.
    let total_by_annuli: f64 = annuli.iter().map(|a| a.restricted_length).sum();
    let width_sum: f64 = annuli.iter().map(|a| a.width).sum();
    let bound = LENGTH_BOUND_FACTOR * r0;
    let holds =
        annuli.iter().all(|a| a.holds) && total_by_annuli <= bound + MEMBERSHIP_RTOL * r0.max(1.0);
    Ok(FullBound {
        initial_radius: r0,
        total_by_annuli,
        width_sum,
        residual_length: total_length - total_by_annuli,
        bound,
        holds,
        annuli,
    })
}

/// Certificates of one annulus `U(lambda R, R)` of a decomposed curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusLemmas {
    pub outer: f64,
    pub inner: f64,
    pub pieces: usize,
    pub segments: usize,
    pub vertical: VerticalBound,
    pub horizontal: HorizontalBound,
    pub estimate: AnnulusEstimate,
}

impl AnnulusLemmas {
    pub fn holds(&self) -> bool {
        self.vertical.holds && self.horizontal.holds && self.estimate.holds
    }
}

/// Cuts a curve with nonincreasing distance to `params.center` into the
/// annuli `U(lambda^{i+1} R, lambda^i R)`, `R = params.outer_radius`, down to
/// the distance of its last sample, and runs the vertical, horizontal and
/// total length checks on every annulus.
///
/// `eta` is taken from [`eta_for_annulus`] on the outermost annulus and
/// rescaled: the conditions defining it are invariant under dilation about
/// the center.
pub fn annulus_lemmas(
    curve: &Polyline,
    params: &AnnulusParams,
    eta_density: usize,
) -> Result<Vec<AnnulusLemmas>> {
    let eta0 = eta_for_annulus(params, eta_density);
    let r0 = params.outer_radius;
    let last = curve.last().dist(params.center);
    let floor = last.max(1e-12 * r0);
    let mut out = Vec::new();
    let mut outer = r0;
    while outer > floor && out.len() < MAX_ANNULI {
        let ring = AnnulusParams::with_center(params.alpha, params.lambda, outer, params.center)?;
        let eta = eta0 * outer / r0;
        let pieces = clip_to_annulus(curve, params.center, ring.inner_radius(), outer);
        let mut segments = Vec::new();
        for piece in &pieces {
            segments.extend(polygonal_approximation(piece, &ring, eta)?);
        }
        out.push(AnnulusLemmas {
            outer,
            inner: ring.inner_radius(),
            pieces: pieces.len(),
            segments: segments.len(),
            vertical: vertical_bound_check(&segments, &ring),
            horizontal: horizontal_bound_check(&segments, &ring),
            estimate: annulus_length_estimate(curve, &ring),
        });
        outer = ring.inner_radius();
    }
    Ok(out)
}

fn point_segment_distance(x: Vec2, a: Vec2, b: Vec2) -> f64 {
    let d = b - a;
    let dd = d.norm_sq();
    if dd == 0.0 {
        return x.dist(a);
    }
    let s = ((x - a).dot(d) / dd).clamp(0.0, 1.0);
    x.dist(a + d * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: f64, lambda: f64) -> AnnulusParams {
        AnnulusParams::new(alpha, lambda, 1.0).unwrap()
    }

    #[test]
    fn parameter_validation() {
        assert!(AnnulusParams::new(0.0, 0.5, 1.0).is_err());
        assert!(AnnulusParams::new(PI / 6.0, 0.45, 1.0).is_err());
        assert!(AnnulusParams::new(PI / 6.0, 0.51, 1.0).is_ok());
        assert!(AnnulusParams::new(PI / 6.0, 1.0, 1.0).is_err());
        assert!(AnnulusParams::new(PI / 6.0, 0.8, -1.0).is_err());
    }

    #[test]
    fn radial_theta_is_zero() {
        let t = segment_theta(Vec2::new(0.0, 2.0), Vec2::new(0.0, 1.0), Vec2::ZERO).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn theta_against_explicit_vectors() {
        // m = (1, 0.5): m->O = (-1, -0.5), m->q = (0, -0.5).
        let t = segment_theta(Vec2::new(1.0, 1.0), Vec2::new(1.0, 0.0), Vec2::ZERO).unwrap();
        let (mo, mq) = (Vec2::new(-1.0, -0.5), Vec2::new(0.0, -0.5));
        let unsigned = (mo.dot(mq) / (mo.norm() * mq.norm())).acos();
        assert!((t - unsigned).abs() < 1e-15);
        assert!((t - 1.1071487177940904).abs() < 1e-12);
        // Swapped input gives the same value.
        let s = segment_theta(Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0), Vec2::ZERO).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn theta_errors() {
        let p = Vec2::new(0.5, 0.5);
        assert!(matches!(
            segment_theta(p, p, Vec2::ZERO),
            Err(Error::DegenerateSegment(_))
        ));
        assert!(matches!(
            segment_theta(Vec2::new(1.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::ZERO),
            Err(Error::SingularMidpoint)
        ));
        assert_eq!(
            segment_theta(Vec2::new(1.0, 1.0), Vec2::ZERO, Vec2::ZERO).unwrap(),
            0.0
        );
    }

    #[test]
    fn kind_boundaries_go_horizontal() {
        let a = PI / 6.0;
        let edge = FRAC_PI_2 - a;
        assert_eq!(kind_for_theta(0.0, a), SegmentKind::Vertical);
        assert_eq!(kind_for_theta(edge, a), SegmentKind::HorizontalNegative);
        assert_eq!(kind_for_theta(-edge, a), SegmentKind::HorizontalPositive);
        assert_eq!(
            kind_for_theta(80f64.to_radians(), a),
            SegmentKind::HorizontalNegative
        );
        assert_eq!(
            kind_for_theta(-FRAC_PI_2, a),
            SegmentKind::HorizontalPositive
        );
        assert_eq!(
            kind_for_theta(FRAC_PI_2, a),
            SegmentKind::HorizontalNegative
        );
        assert_eq!(kind_for_theta(edge - 1e-12, a), SegmentKind::Vertical);
    }

    #[test]
    fn clockwise_tangential_segment_is_negative() {
        // At the top of the circle, moving to the right (clockwise about O)
        // and slightly inward: m->q turns counterclockwise from m->O.
        let pr = params(PI / 6.0, 0.8);
        let seg = classify_segment(Vec2::new(-0.05, 0.95), Vec2::new(0.05, 0.949), &pr).unwrap();
        assert_eq!(seg.kind, SegmentKind::HorizontalNegative);
        let seg = classify_segment(Vec2::new(0.05, 0.95), Vec2::new(-0.05, 0.949), &pr).unwrap();
        assert_eq!(seg.kind, SegmentKind::HorizontalPositive);
    }

    #[test]
    fn classify_rejects_outside_points() {
        let pr = params(PI / 6.0, 0.8);
        assert!(matches!(
            classify_segment(Vec2::new(0.0, 0.5), Vec2::new(0.0, 0.9), &pr),
            Err(Error::OutOfAnnulus { .. })
        ));
    }

    #[test]
    fn segment_estimate_examples() {
        let pr = AnnulusParams::new(PI / 12.0, 0.4, 2.0).unwrap();
        let seg = classify_segment(Vec2::new(0.0, 2.0), Vec2::new(0.0, 1.0), &pr).unwrap();
        let e = segment_length_estimate(&seg, pr.center).unwrap();
        assert_eq!((e.lhs, e.rhs), (1.0, 2.0));
        assert!(e.holds);
        let pr = params(PI / 12.0, 0.5);
        let seg = classify_segment(
            Vec2::new(1.0, 1.0) / 2f64.sqrt(),
            Vec2::new(1.0, 0.0) / 2f64.sqrt(),
            &pr,
        )
        .unwrap();
        let e = segment_length_estimate(&seg, pr.center).unwrap();
        // Scaled copy of p=(1,1), q=(1,0): rhs = (2/cos 1.1071)(sqrt2 - 1) / sqrt2.
        assert!((e.rhs * 2f64.sqrt() - 1.8524).abs() < 1e-3);
        assert!(e.holds);
    }

    #[test]
    fn projection_with_explicit_quadratic() {
        let pr = params(PI / 6.0, 0.8);
        let x = Vec2::new(0.0, 1.0);
        let p = project_pi(x, &pr).unwrap();
        // |x + s d| = 0.8 with <x, d> = -cos(alpha).
        let c = (PI / 6.0).cos();
        let s1 = c - (c * c - 1.0 + 0.64_f64).sqrt();
        assert!((p.pi_x.dist(x) - s1).abs() < 1e-12);
        assert!((p.pi_x.norm() - 0.8).abs() < 1e-12);
        assert!((p.pi_prime_x.norm() - 0.8).abs() < 1e-12);
        assert!(x.dist(p.pi_x) < x.dist(p.pi_prime_x));
        let ang = crate::geom::signed_angle(-x, p.pi_x - x);
        assert!((ang - PI / 6.0).abs() < 1e-12);
        assert!(p.half_plane.contains(Vec2::ZERO, 0.0));
    }

    #[test]
    fn projection_small_alpha_is_radial() {
        let pr = params(1e-9, 0.5);
        let p = project_pi(Vec2::new(0.0, 1.0), &pr).unwrap();
        assert!(p.pi_x.dist(Vec2::new(0.0, 0.5)) < 1e-8);
    }

    #[test]
    fn eta_conditions_hold_on_fine_grid() {
        let pr = params(PI / 6.0, 0.8);
        let eta = eta_for_annulus(&pr, 120);
        assert!(eta > 0.0 && eta < 1.0);
        // Re-verify on an independent, finer grid.
        let n = 200;
        let pts: Vec<Vec2> = (0..n)
            .flat_map(|a| {
                let r = 0.8 + 0.2 * a as f64 / (n - 1) as f64;
                (0..n).map(move |b| Vec2::from_polar(r, 2.0 * PI * b as f64 / n as f64))
            })
            .collect();
        let proj: Vec<Projection> = pts.iter().map(|&x| project_pi(x, &pr).unwrap()).collect();
        let mut checked = 0usize;
        for ra in 0..n {
            let px = &proj[ra * n];
            for py in &proj {
                if px.x.dist(py.x) < eta {
                    checked += 1;
                    assert!(px.x.dist(py.pi_x) < px.x.dist(py.pi_prime_x));
                    assert!(px.pi_x.dist(py.pi_x) < px.pi_x.dist(px.pi_prime_x));
                    assert!(px.pi_x.dist(py.pi_x) < px.pi_x.dist(py.pi_prime_x));
                }
            }
        }
        assert!(checked > n);
    }

    #[test]
    fn radial_curve_all_vertical() {
        let pr = params(PI / 6.0, 0.5);
        let c = Polyline::from_points(
            (0..=10)
                .map(|k| Vec2::new(0.0, 1.0 - 0.05 * k as f64))
                .collect(),
        )
        .unwrap();
        let segs = polygonal_approximation(&c, &pr, 0.01).unwrap();
        assert!(segs.iter().all(|s| s.kind == SegmentKind::Vertical));
        assert!(segs.iter().all(|s| s.length() <= 0.01 + 1e-15));
        let v = vertical_bound_check(&segs, &pr);
        assert!((v.sum_vertical - 0.5).abs() < 1e-12 && v.holds);
        let h = horizontal_bound_check(&segs, &pr);
        assert_eq!(h.sum_horizontal, 0.0);
        assert!(h.holds);
    }

    #[test]
    fn approximation_errors() {
        let pr = params(PI / 6.0, 0.5);
        let single = Polyline::from_points(vec![Vec2::new(0.0, 0.9)]).unwrap();
        assert!(polygonal_approximation(&single, &pr, 0.1)
            .unwrap()
            .is_empty());
        let out = Polyline::from_points(vec![Vec2::new(0.0, 0.9), Vec2::new(0.0, 0.2)]).unwrap();
        assert!(matches!(
            polygonal_approximation(&out, &pr, 0.1),
            Err(Error::OutOfAnnulus { .. })
        ));
        let up = Polyline::from_points(vec![Vec2::new(0.0, 0.6), Vec2::new(0.0, 0.9)]).unwrap();
        assert!(matches!(
            polygonal_approximation(&up, &pr, 0.1),
            Err(Error::NonMonotoneRadius { .. })
        ));
    }

    #[test]
    fn clip_radial_segment() {
        let c = Polyline::from_points(vec![Vec2::new(0.0, 2.0), Vec2::ZERO]).unwrap();
        let pieces = clip_to_annulus(&c, Vec2::ZERO, 0.5, 1.0);
        assert_eq!(pieces.len(), 1);
        assert!((length(&pieces[0]) - 0.5).abs() < 1e-15);
        let pr = AnnulusParams::new(PI / 12.0, 0.5, 1.0).unwrap();
        let e = annulus_length_estimate(&c, &pr);
        assert!((e.restricted_length - 0.5).abs() < 1e-15 && e.holds);
    }

    #[test]
    fn clip_small_annulus_far_along_a_long_segment() {
        // Roots near s = 1 on a unit-scale segment, for circles of radius
        // about 1e-8: the crossings must still land on their circles.
        let c = Polyline::from_points(vec![Vec2::new(0.5, 0.3), Vec2::ZERO]).unwrap();
        let (inner, outer) = (3.7e-9, 6.2e-9);
        let pieces = clip_to_annulus(&c, Vec2::ZERO, inner, outer);
        assert_eq!(pieces.len(), 1);
        let (a, b) = (pieces[0].first(), pieces[0].last());
        assert!((a.norm() / outer - 1.0).abs() < 1e-14);
        assert!((b.norm() / inner - 1.0).abs() < 1e-14);
        assert!(a.cross(b).abs() < 1e-14 * outer * inner);
    }

    #[test]
    fn clip_chord_through_hole_gives_two_pieces() {
        let c = Polyline::from_points(vec![Vec2::new(-2.0, 0.1), Vec2::new(2.0, 0.1)]).unwrap();
        let pieces = clip_to_annulus(&c, Vec2::ZERO, 0.5, 1.0);
        assert_eq!(pieces.len(), 2);
        let expect = 2.0 * ((1.0f64 - 0.01).sqrt() - (0.25f64 - 0.01).sqrt());
        let got: f64 = pieces.iter().map(length).sum();
        assert!((got - expect).abs() < 1e-14);
    }

    #[test]
    fn full_bound_radial_segment() {
        let c = Polyline::from_points(vec![Vec2::new(1.0, 0.0), Vec2::ZERO]).unwrap();
        let fb = full_length_bound(&c, 0.5, Vec2::ZERO, 1e-12).unwrap();
        assert!((fb.total_by_annuli - 1.0).abs() < 1e-9);
        assert!((fb.width_sum - 1.0).abs() < 1e-9);
        for (i, a) in fb.annuli.iter().take(10).enumerate() {
            assert!((a.width - 0.5f64.powi(i as i32 + 1)).abs() < 1e-15);
        }
        assert!(fb.holds);
        let away = Polyline::from_points(vec![Vec2::new(1.0, 0.0), Vec2::new(0.5, 0.0)]).unwrap();
        assert!(matches!(
            full_length_bound(&away, 0.5, Vec2::ZERO, 1e-6),
            Err(Error::NotConverging { .. })
        ));
    }

    #[test]
    fn arcs_overlap_logic() {
        let a = Arc {
            start: 0.0,
            sweep: 0.5,
        };
        assert!(a.overlaps(
            &Arc {
                start: 0.4,
                sweep: 0.5
            },
            1e-12
        ));
        assert!(!a.overlaps(
            &Arc {
                start: 0.5,
                sweep: 0.5
            },
            1e-12
        ));
        assert!(a.overlaps(
            &Arc {
                start: -0.1,
                sweep: 0.2
            },
            1e-12
        ));
        assert!(!a.overlaps(
            &Arc {
                start: 6.0,
                sweep: 0.2
            },
            1e-12
        ));
    }
}
