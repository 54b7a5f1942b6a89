//! Planar vector arithmetic and the small set of exact-ish predicates the rest
//! of the crate is built on (line/circle and segment intersections, signed
//! angles).

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// A point or vector of the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Point at distance `r` from the origin in direction `theta`.
    #[inline]
    pub fn from_polar(r: f64, theta: f64) -> Self {
        Self::new(r * theta.cos(), r * theta.sin())
    }

    #[inline]
    pub fn unit(theta: f64) -> Self {
        Self::from_polar(1.0, theta)
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product; positive when `o` is
    /// counterclockwise from `self`.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Polar angle in `(-pi, pi]`.
    #[inline]
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn normalized(self) -> Option<Vec2> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self / n)
    }

    /// Counterclockwise rotation by `phi`.
    #[inline]
    pub fn rotate(self, phi: f64) -> Vec2 {
        let (s, c) = phi.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Counterclockwise quarter turn.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn lerp(self, o: Vec2, s: f64) -> Vec2 {
        self + (o - self) * s
    }

    #[inline]
    pub fn midpoint(self, o: Vec2) -> Vec2 {
        (self + o) * 0.5
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

/// Signed angle from `a` to `b` in `(-pi, pi]`, counterclockwise positive.
#[inline]
pub fn signed_angle(a: Vec2, b: Vec2) -> f64 {
    a.cross(b).atan2(a.dot(b))
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(mut d: f64) -> f64 {
    if d.is_finite() {
        d = d.rem_euclid(2.0 * PI);
        if d > PI {
            d -= 2.0 * PI;
        }
    }
    d
}

/// Parameters `s` where the line `p + s*d` meets the circle `|x - c| = radius`,
/// in increasing order. `None` when the line misses the circle.
pub fn line_circle_params(p: Vec2, d: Vec2, c: Vec2, radius: f64) -> Option<(f64, f64)> {
    let len = d.norm();
    if len == 0.0 {
        return None;
    }
    let u = d / len;
    let w = p - c;
    // Signed distance from the center to the line, free of the cancellation
    // in |w|^2 - radius^2 when the circle is small against |w|.
    let h = u.cross(w);
    let disc = (radius - h) * (radius + h);
    if disc < 0.0 {
        return None;
    }
    let foot = -w.dot(u) / len;
    let half = disc.sqrt() / len;
    Some((foot - half, foot + half))
}

/// Closed-segment intersection. Returns all intersection points for proper
/// crossings, or the overlap endpoints for collinear overlaps.
pub fn segment_intersections(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2, eps: f64) -> Vec<Vec2> {
    let r = a1 - a0;
    let s = b1 - b0;
    let denom = r.cross(s);
    let qp = b0 - a0;
    let scale = r.norm().max(s.norm()).max(1e-300);
    if denom.abs() <= eps * scale * scale {
        // Parallel; check collinearity.
        if qp.cross(r).abs() > eps * scale * scale.max(qp.norm()) {
            return Vec::new();
        }
        let rr = r.norm_sq();
        if rr == 0.0 {
            return if a0.dist(b0).min(a0.dist(b1)) <= eps * scale {
                vec![a0]
            } else {
                Vec::new()
            };
        }
        let t0 = qp.dot(r) / rr;
        let t1 = (b1 - a0).dot(r) / rr;
        let (lo, hi) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
        let lo = lo.max(0.0);
        let hi = hi.min(1.0);
        if lo > hi + eps {
            return Vec::new();
        }
        let mut out = vec![a0 + r * lo];
        if hi - lo > eps {
            out.push(a0 + r * hi);
        }
        return out;
    }
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    if (-eps..=1.0 + eps).contains(&t) && (-eps..=1.0 + eps).contains(&u) {
        vec![a0 + r * t.clamp(0.0, 1.0)]
    } else {
        Vec::new()
    }
}

/// Minimum-norm point of the convex hull of `pts`. Exact in the plane: the
/// answer is the origin, a vertex, or lies on the segment between two points.
pub fn min_norm_in_hull(pts: &[Vec2]) -> Vec2 {
    match pts.len() {
        0 => Vec2::ZERO,
        1 => pts[0],
        _ => {
            if origin_in_hull(pts) {
                return Vec2::ZERO;
            }
            let mut best = pts[0];
            for (i, &a) in pts.iter().enumerate() {
                if a.norm_sq() < best.norm_sq() {
                    best = a;
                }
                for &b in &pts[i + 1..] {
                    let p = closest_on_segment_to_origin(a, b);
                    if p.norm_sq() < best.norm_sq() {
                        best = p;
                    }
                }
            }
            best
        }
    }
}

fn closest_on_segment_to_origin(a: Vec2, b: Vec2) -> Vec2 {
    let d = b - a;
    let dd = d.norm_sq();
    if dd == 0.0 {
        return a;
    }
    let t = (-a.dot(d) / dd).clamp(0.0, 1.0);
    a + d * t
}

fn origin_in_hull(pts: &[Vec2]) -> bool {
    // The origin is in the hull iff it lies in some triangle of the points
    // (Caratheodory in the plane). Point counts here are tiny.
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let d1 = a.cross(b);
                let d2 = b.cross(c);
                let d3 = c.cross(a);
                let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
                let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
                if !(neg && pos) {
                    return true;
                }
            }
        }
    }
    false
}
