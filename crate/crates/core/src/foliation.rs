//! Convex bodies sampled by their support functions on a uniform direction
//! grid, nested families interpolated by Minkowski combinations, the convex
//! function whose sublevel sets are those families, and its orthogonal
//! trajectories.
//!
//! Levels decay geometrically and quickly drop below the resolution of `f64`
//! around their limit, so a family keeps the gaps `lambda_k - lambda_{k+1}`
//! and the offsets `lambda_k - lambda_last` next to the levels themselves. All
//! interpolation arithmetic runs on offsets.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, PI};
use std::io::{Read, Write};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::curve::Polyline;
use crate::error::{Error, Result};
use crate::fields::{FieldClass, ScalarField};
use crate::flow::{Orbit, TerminatedBy};
use crate::geom::{min_norm_in_hull, signed_angle, Vec2};

pub const DEFAULT_GRID: usize = 720;

/// Membership slack relative to the support scale.
const SLACK_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexBody {
    pub label: String,
    /// `support[j] = delta(u_j)` with `u_j` at angle `2 pi j / M`.
    pub support: Vec<f64>,
}

pub fn grid_angle(j: usize, m: usize) -> f64 {
    2.0 * PI * j as f64 / m as f64
}

fn grid_dir(j: usize, m: usize) -> Vec2 {
    Vec2::unit(grid_angle(j, m))
}

/// Unit vectors of the `m`-direction grid, computed once per grid size.
fn grid_dirs(m: usize) -> Arc<[Vec2]> {
    static TABLES: OnceLock<Mutex<HashMap<usize, Arc<[Vec2]>>>> = OnceLock::new();
    let mut tables = TABLES
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    tables
        .entry(m)
        .or_insert_with(|| (0..m).map(|j| grid_dir(j, m)).collect())
        .clone()
}

impl ConvexBody {
    pub fn new(label: impl Into<String>, support: Vec<f64>) -> Result<Self> {
        let body = Self {
            label: label.into(),
            support,
        };
        if body.support.len() < 3 {
            return Err(Error::Construction(
                "direction grid needs at least 3 directions".into(),
            ));
        }
        if body.support.iter().any(|d| !d.is_finite()) {
            return Err(Error::Construction(format!(
                "body {} has non-finite support",
                body.label
            )));
        }
        if let Some(j) = body.support_violation() {
            return Err(Error::Construction(format!(
                "body {} is not a support function at direction {j}",
                body.label
            )));
        }
        Ok(body)
    }

    pub fn grid_size(&self) -> usize {
        self.support.len()
    }

    pub fn direction(&self, j: usize) -> Vec2 {
        grid_dir(j, self.grid_size())
    }

    fn scale(&self) -> f64 {
        self.support
            .iter()
            .fold(0.0f64, |m, d| m.max(d.abs()))
            .max(f64::MIN_POSITIVE)
    }

    /// First index `j` where `delta_{j-1} + delta_{j+1} < 2 delta_j cos(step)`,
    /// i.e. where the reconstructed polygon would have an edge of negative
    /// length.
    pub fn support_violation(&self) -> Option<usize> {
        let m = self.grid_size();
        let c = (2.0 * PI / m as f64).cos();
        let tol = 1e-12 * self.scale();
        (0..m).find(|&j| {
            let prev = self.support[(j + m - 1) % m];
            let next = self.support[(j + 1) % m];
            prev + next - 2.0 * self.support[j] * c < -tol
        })
    }

    /// Support value at an arbitrary angle by linear interpolation.
    pub fn support_at(&self, phi: f64) -> f64 {
        let m = self.grid_size();
        let pos = phi.rem_euclid(2.0 * PI) / (2.0 * PI) * m as f64;
        let i = (pos.floor() as usize) % m;
        let w = pos - pos.floor();
        (1.0 - w) * self.support[i] + w * self.support[(i + 1) % m]
    }

    /// `<x, u_j> <= delta_j + slack` for every grid direction.
    pub fn contains(&self, x: Vec2) -> bool {
        let slack = SLACK_REL * self.scale();
        let dirs = grid_dirs(self.grid_size());
        dirs.iter()
            .zip(&self.support)
            .all(|(u, &d)| x.dot(*u) <= d + slack)
    }

    /// Vertices of the polygon cut out by the supporting lines, vertex `j`
    /// lying on lines `j` and `j + 1`.
    pub fn polygon(&self) -> Vec<Vec2> {
        let m = self.grid_size();
        let s = (2.0 * PI / m as f64).sin();
        (0..m)
            .map(|j| {
                let (u, v) = (self.direction(j), self.direction((j + 1) % m));
                let (a, b) = (self.support[j], self.support[(j + 1) % m]);
                // Solve <p, u> = a, <p, v> = b.
                Vec2::new(a * v.y - b * u.y, b * u.x - a * v.x) / s
            })
            .collect()
    }

    /// Discrete Steiner point `(2/M) sum delta_j u_j`.
    pub fn steiner_point(&self) -> Vec2 {
        let m = self.grid_size();
        (0..m).fold(Vec2::ZERO, |acc, j| {
            acc + self.direction(j) * self.support[j]
        }) * (2.0 / m as f64)
    }

    /// Image under `x -> scale * R(-rotation) x`, that is a homothety and a
    /// clockwise rotation by `rotation`: `delta'(phi) = scale * delta(phi +
    /// rotation)`.
    pub fn transformed(
        &self,
        scale: f64,
        rotation: f64,
        label: impl Into<String>,
    ) -> Result<ConvexBody> {
        let m = self.grid_size();
        let support = (0..m)
            .map(|j| scale * self.support_at(grid_angle(j, m) + rotation))
            .collect();
        ConvexBody::new(label, support)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["u_angle", "delta"])?;
        let m = self.grid_size();
        for (j, d) in self.support.iter().enumerate() {
            w.write_record(&[format!("{:?}", grid_angle(j, m)), format!("{d:?}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(label: impl Into<String>, input: R) -> Result<ConvexBody> {
        let mut r = csv::Reader::from_reader(input);
        let mut support = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let d = rec
                .get(1)
                .ok_or_else(|| Error::Parse("missing delta column".into()))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(e.to_string()))?;
            support.push(d);
        }
        let body = ConvexBody::new(label, support)?;
        Ok(body)
    }
}

pub fn body_from_ball(radius: f64, m: usize) -> Result<ConvexBody> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Construction(format!(
            "ball radius {radius} must be > 0"
        )));
    }
    ConvexBody::new(format!("ball({radius:?})"), vec![radius; m])
}

/// Ellipse with semi-axes `a` along `(cos rotation, sin rotation)` and `b`
/// across it.
pub fn body_from_ellipse(a: f64, b: f64, rotation: f64, m: usize) -> Result<ConvexBody> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Construction("ellipse semi-axes must be > 0".into()));
    }
    let e1 = Vec2::unit(rotation);
    let e2 = e1.perp();
    let support = (0..m)
        .map(|j| {
            let u = grid_dir(j, m);
            (a * a * u.dot(e1).powi(2) + b * b * u.dot(e2).powi(2)).sqrt()
        })
        .collect();
    ConvexBody::new(format!("ellipse({a:?},{b:?},{rotation:?})"), support)
}

/// `s C + (1 - s) D`.
pub fn minkowski_combine(s: f64, c: &ConvexBody, d: &ConvexBody) -> Result<ConvexBody> {
    if c.grid_size() != d.grid_size() {
        return Err(Error::GridMismatch(c.grid_size(), d.grid_size()));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Construction(format!("weight {s} outside [0, 1]")));
    }
    let support = c
        .support
        .iter()
        .zip(&d.support)
        .map(|(a, b)| s * a + (1.0 - s) * b)
        .collect();
    ConvexBody::new(
        format!("{s:?}*{}+{:?}*{}", c.label, 1.0 - s, d.label),
        support,
    )
}

/// `max_j (delta_prev - delta_mid) / (delta_mid - delta_next)`.
pub fn compute_k(prev: &ConvexBody, mid: &ConvexBody, next: &ConvexBody) -> Result<f64> {
    let m = mid.grid_size();
    if prev.grid_size() != m {
        return Err(Error::GridMismatch(prev.grid_size(), m));
    }
    if next.grid_size() != m {
        return Err(Error::GridMismatch(m, next.grid_size()));
    }
    let mut k = f64::NEG_INFINITY;
    for j in 0..m {
        let den = mid.support[j] - next.support[j];
        if !(den > 0.0) {
            return Err(Error::NestingViolation {
                index: j,
                denominator: den,
            });
        }
        k = k.max((prev.support[j] - mid.support[j]) / den);
    }
    Ok(k)
}

/// Level gaps `lambda_k - lambda_{k+1} = K^{-k} (lambda_0 - lambda_1)` with
/// `K = max(Ks) + 1`, where `ks[i]` is `K_{i+1}`. Checks
/// `0 < K_k (lambda_k - lambda_{k+1}) <= lambda_{k-1} - lambda_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub k: f64,
    pub levels: Vec<f64>,
    pub gaps: Vec<f64>,
}

pub fn torralba_levels(ks: &[f64], lambda0: f64, lambda1: f64) -> Result<Levels> {
    if !(lambda0 > lambda1) {
        return Err(Error::Construction("need lambda0 > lambda1".into()));
    }
    if ks.iter().any(|&k| !(k > 0.0 && k.is_finite())) {
        return Err(Error::Construction("every K_k must be positive".into()));
    }
    let k = ks.iter().copied().fold(0.0, f64::max) + 1.0;
    let mut gaps = Vec::with_capacity(ks.len() + 1);
    gaps.push(lambda0 - lambda1);
    for i in 1..=ks.len() {
        gaps.push(gaps[i - 1] / k);
    }
    for (i, &kk) in ks.iter().enumerate() {
        // K_{i+1} (lambda_{i+1} - lambda_{i+2}) <= lambda_i - lambda_{i+1}.
        let lhs = kk * gaps[i + 1];
        if !(lhs > 0.0 && lhs <= gaps[i]) {
            return Err(Error::Construction(format!(
                "level condition fails at k = {}",
                i + 1
            )));
        }
    }
    let mut levels = Vec::with_capacity(gaps.len() + 1);
    levels.push(lambda0);
    for (i, g) in gaps.iter().enumerate() {
        levels.push(levels[i] - g);
    }
    Ok(Levels { k, levels, gaps })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoliationFamily {
    pub bodies: Vec<ConvexBody>,
    /// `lambda_0 > lambda_1 > ...`, one per body.
    pub levels: Vec<f64>,
    /// `gaps[k] = lambda_k - lambda_{k+1}`.
    pub gaps: Vec<f64>,
    /// `offsets[k] = lambda_k - lambda_last`, summed from the gaps.
    pub offsets: Vec<f64>,
}

impl FoliationFamily {
    /// Family from explicit levels.
    pub fn new(bodies: Vec<ConvexBody>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != bodies.len() || bodies.is_empty() {
            return Err(Error::Construction("one level per body required".into()));
        }
        let gaps: Vec<f64> = levels.windows(2).map(|w| w[0] - w[1]).collect();
        Self::from_gaps(bodies, levels[0], gaps)
    }

    /// Family from the top level and the gaps between consecutive levels.
    pub fn from_gaps(bodies: Vec<ConvexBody>, lambda0: f64, gaps: Vec<f64>) -> Result<Self> {
        if gaps.len() + 1 != bodies.len() {
            return Err(Error::Construction(
                "need one gap per consecutive pair of bodies".into(),
            ));
        }
        if gaps.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::Construction(
                "levels must be strictly decreasing".into(),
            ));
        }
        let m = bodies[0].grid_size();
        for (i, w) in bodies.windows(2).enumerate() {
            if w[1].grid_size() != m {
                return Err(Error::GridMismatch(m, w[1].grid_size()));
            }
            for j in 0..m {
                let den = w[0].support[j] - w[1].support[j];
                if !(den > 0.0) {
                    return Err(Error::Construction(format!(
                        "body {} is not interior to body {i} at direction {j} (gap {den})",
                        i + 1
                    )));
                }
            }
        }
        let n = bodies.len();
        let mut offsets = vec![0.0; n];
        for k in (0..n - 1).rev() {
            offsets[k] = offsets[k + 1] + gaps[k];
        }
        let mut levels = Vec::with_capacity(n);
        levels.push(lambda0);
        for (k, g) in gaps.iter().enumerate() {
            levels.push(levels[k] - g);
        }
        Ok(Self {
            bodies,
            levels,
            gaps,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.bodies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bodies.is_empty()
    }

    pub fn grid_size(&self) -> usize {
        self.bodies[0].grid_size()
    }

    pub fn last_level(&self) -> f64 {
        *self.levels.last().unwrap()
    }

    /// Shell index `k` with `x` in `C_k` but not interior to `C_{k+1}`, or
    /// `None` inside the last body. Errors outside `C_0`.
    pub fn shell_of(&self, x: Vec2) -> Result<Option<usize>> {
        if !self.bodies[0].contains(x) {
            return Err(Error::Domain(x));
        }
        // Bodies are nested, so membership is monotone in the index.
        let (mut lo, mut hi) = (0, self.len());
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.bodies[mid].contains(x) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo + 1 < self.len()).then_some(lo))
    }

    /// Per-direction ratios `(<x, u_j> - delta_{k+1,j}) / (delta_{k,j} -
    /// delta_{k+1,j})` in shell `k`; the interpolation weight of the leaf
    /// through `x` is their maximum.
    fn ratios(&self, k: usize, x: Vec2) -> impl Iterator<Item = f64> + '_ {
        let (outer, inner) = (&self.bodies[k], &self.bodies[k + 1]);
        let dirs = grid_dirs(self.grid_size());
        (0..dirs.len()).map(move |j| {
            (x.dot(dirs[j]) - inner.support[j]) / (outer.support[j] - inner.support[j])
        })
    }

    /// Interpolation weight `s` of the leaf `s C_k + (1 - s) C_{k+1}` whose
    /// boundary passes through `x`, unclamped.
    pub fn leaf_weight(&self, k: usize, x: Vec2) -> f64 {
        self.ratios(k, x).fold(f64::NEG_INFINITY, f64::max)
    }

    /// `f(x) - lambda_last`.
    pub fn value_offset(&self, x: Vec2) -> Result<f64> {
        match self.shell_of(x)? {
            None => Ok(0.0),
            Some(k) => {
                let s = self.leaf_weight(k, x).clamp(0.0, 1.0);
                Ok(self.offsets[k + 1] + s * self.gaps[k])
            }
        }
    }

    /// Convex extension to the whole plane: the shell-0 interpolation
    /// continued past `C_0` (weights above one).
    fn extended_offset(&self, x: Vec2) -> f64 {
        if self.bodies[0].contains(x) {
            if let Ok(v) = self.value_offset(x) {
                return v;
            }
        }
        if self.len() == 1 {
            return 0.0;
        }
        let s = self.leaf_weight(0, x).max(1.0);
        self.offsets[1] + s * self.gaps[0]
    }
}

/// The convex function with `{f <= lambda_k} = C_k`, at grid resolution.
pub fn foliation_value(family: &FoliationFamily, x: Vec2) -> Result<f64> {
    Ok(family.last_level() + family.value_offset(x)?)
}

/// Same value found by bisection on `s` with membership tests, as a cross
/// check of the closed form.
pub fn foliation_value_bisect(family: &FoliationFamily, x: Vec2, tol: f64) -> Result<f64> {
    let Some(k) = family.shell_of(x)? else {
        return Ok(family.last_level());
    };
    let (outer, inner) = (&family.bodies[k], &family.bodies[k + 1]);
    let m = family.grid_size();
    let inside = |s: f64| {
        (0..m).all(|j| x.dot(grid_dir(j, m)) <= s * outer.support[j] + (1.0 - s) * inner.support[j])
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if inside(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(family.last_level() + family.offsets[k + 1] + hi * family.gaps[k])
}

/// Default leaf decrement of the orthogonal trajectory, as a fraction of a
/// shell.
pub const DEFAULT_LEVEL_FRACTION: f64 = 1.0 / 64.0;

/// Descent along the foliation: from a point on a leaf, move against the leaf
/// normal (resolved below the grid, see `refined_normal`; at corners, minus the
/// minimum-norm element of the scaled active normal cone) until the leaf
/// `level_fraction` of a shell further in is reached. Leaf crossings are
/// computed exactly on the piecewise-linear leaf weight; when the ray misses
/// the target leaf the decrement is halved.
///
/// Parameters are cumulative leaf indices `k + (1 - s)`; `f_values` are the
/// levels. Stops on the boundary of the last body.
pub fn orthogonal_trajectory(
    family: &FoliationFamily,
    x0: Vec2,
    level_fraction: f64,
) -> Result<Orbit> {
    if !(level_fraction > 0.0 && level_fraction <= 1.0) {
        return Err(Error::Construction(
            "level fraction must lie in (0, 1]".into(),
        ));
    }
    let m = family.grid_size();
    let dirs: Vec<Vec2> = (0..m).map(|j| grid_dir(j, m)).collect();
    let Some(mut k) = family.shell_of(x0)? else {
        return Err(Error::Position(x0));
    };
    let mut x = x0;
    let mut s = family.leaf_weight(k, x).clamp(0.0, 1.0);
    let mut ts = vec![k as f64 + (1.0 - s)];
    let mut pts = vec![x];
    let mut fs = vec![family.last_level() + family.offsets[k + 1] + s * family.gaps[k]];
    let last = family.len() - 1;
    let mut steps = 0usize;
    while k < last {
        let (outer, inner) = (&family.bodies[k], &family.bodies[k + 1]);
        let den: Vec<f64> = (0..m)
            .map(|j| outer.support[j] - inner.support[j])
            .collect();
        let a: Vec<f64> = (0..m)
            .map(|j| (x.dot(dirs[j]) - inner.support[j]) / den[j])
            .collect();
        let s_cur = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let d = match refined_normal(outer, inner, s_cur, x, &a) {
            Some(u) => -u,
            None => {
                // Active normals, scaled like the gradient of the leaf weight.
                let active: Vec<Vec2> = (0..m)
                    .filter(|&j| a[j] >= s_cur - 1e-9)
                    .map(|j| dirs[j] / den[j])
                    .collect();
                let g = min_norm_in_hull(&active);
                let Some(d) = (-g).normalized() else {
                    return Err(Error::Position(x));
                };
                d
            }
        };
        let b: Vec<f64> = (0..m).map(|j| d.dot(dirs[j]) / den[j]).collect();
        let mut ds = level_fraction;
        let mut moved = false;
        for _ in 0..60 {
            let target = (s_cur - ds).max(0.0);
            if let Some(t) = first_crossing(&a, &b, target) {
                x += d * t;
                s = target;
                moved = true;
                break;
            }
            ds *= 0.5;
        }
        if !moved {
            return Err(Error::Position(x));
        }
        steps += 1;
        if s <= 0.0 {
            k += 1;
            s = 1.0;
        }
        let t = k as f64 + (1.0 - s);
        if t > *ts.last().unwrap() {
            ts.push(t);
            pts.push(x);
            let off = if k < last {
                family.offsets[k + 1] + s * family.gaps[k]
            } else {
                0.0
            };
            fs.push(family.last_level() + off);
        }
        if steps > 1_000_000 {
            return Err(Error::Construction(
                "trajectory did not reach the last body".into(),
            ));
        }
    }
    Ok(Orbit {
        polyline: Polyline::new(ts, pts)?,
        f_values: fs,
        terminated_by: TerminatedBy::ReachedLimit,
        steps,
    })
}

/// Outer normal of the smooth leaf through `x`, resolved below the grid.
///
/// On a leaf with support `h`, the boundary point with normal angle `phi` is
/// `h u + h' u_perp`, so the normal at `x` solves `<x, u_perp(phi)> = h'(phi)`.
/// `h'` is taken from central differences of the leaf's grid support and
/// interpolated linearly; the root is bracketed in the cells around the grid
/// argmax and bisected. Returns `None` when no bracket is found (corners).
fn refined_normal(
    outer: &ConvexBody,
    inner: &ConvexBody,
    s: f64,
    x: Vec2,
    a: &[f64],
) -> Option<Vec2> {
    let m = a.len();
    let step = 2.0 * PI / m as f64;
    let h = |j: usize| inner.support[j] + s * (outer.support[j] - inner.support[j]);
    let dh = |j: usize| (h((j + 1) % m) - h((j + m - 1) % m)) / (2.0 * step);
    let jstar = (0..m).max_by(|&i, &j| a[i].total_cmp(&a[j]))?;
    // Residual on the cell starting at grid index `j`, at offset `w` in [0, 1].
    let residual = |j: usize, w: f64| {
        let phi = (j as f64 + w) * step;
        let slope = (1.0 - w) * dh(j % m) + w * dh((j + 1) % m);
        x.dot(Vec2::unit(phi).perp()) - slope
    };
    // Cells nearest the argmax first.
    for off in [0isize, -1, 1, -2] {
        let j = (jstar as isize + off).rem_euclid(m as isize) as usize;
        let (f0, f1) = (residual(j, 0.0), residual(j, 1.0));
        if !(f0 >= 0.0 && f1 <= 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if residual(j, mid) >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Some(Vec2::unit((j as f64 + 0.5 * (lo + hi)) * step));
    }
    None
}

/// Smallest `t >= 0` with `max_j (a_j + t b_j) <= target`, if any.
fn first_crossing(a: &[f64], b: &[f64], target: f64) -> Option<f64> {
    let mut lo: f64 = 0.0;
    let mut hi = f64::INFINITY;
    for (&aj, &bj) in a.iter().zip(b) {
        let r = target - aj;
        if bj < 0.0 {
            lo = lo.max(r / bj);
        } else if bj > 0.0 {
            hi = hi.min(r / bj);
        } else if r < 0.0 {
            return None;
        }
    }
    // Rounding in the bounds of nearly parallel constraints.
    (lo <= hi * (1.0 + 1e-12) + 1e-15 && lo.is_finite()).then_some(lo)
}

/// Base quadruple: `B(O,1)`, `B(O,0.9)`, an ellipse with semi-axes 0.85 and
/// 0.65, `B(O,0.6)`; the fifth body `B(O,1/2)` closes the first period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseSpec {
    pub a: f64,
    pub b: f64,
    pub rotation: f64,
}

impl Default for EllipseSpec {
    fn default() -> Self {
        Self {
            a: 0.85,
            b: 0.65,
            rotation: FRAC_PI_4,
        }
    }
}

pub fn base_quadruple(ellipse: EllipseSpec, m: usize) -> Result<[ConvexBody; 4]> {
    Ok([
        body_from_ball(1.0, m)?,
        body_from_ball(0.9, m)?,
        body_from_ellipse(ellipse.a, ellipse.b, ellipse.rotation, m)?,
        body_from_ball(0.6, m)?,
    ])
}

/// Bodies `C_0 .. C_{4 periods}` with `C_{4p + i} = T^p(C_i)`, where `T` halves
/// and rotates clockwise by `theta`. `T^p` is applied in one interpolation.
pub fn spiral_bodies(
    base: &[ConvexBody; 4],
    theta: f64,
    periods: usize,
) -> Result<Vec<ConvexBody>> {
    let mut out = Vec::with_capacity(4 * periods + 1);
    for k in 0..=4 * periods {
        let p = k / 4;
        let src = &base[k % 4];
        let scale = 0.5f64.powi(p as i32);
        let body = if p == 0 {
            src.clone()
        } else {
            src.transformed(scale, p as f64 * theta, format!("T^{p}({})", src.label))?
        };
        out.push(body);
    }
    Ok(out)
}

/// Family over `bodies` with levels from `lambda0`, `lambda1` and the `K_k`
/// of consecutive triples.
pub fn family_with_levels(
    bodies: Vec<ConvexBody>,
    lambda0: f64,
    lambda1: f64,
) -> Result<(FoliationFamily, Levels)> {
    let ks = bodies
        .windows(3)
        .map(|w| compute_k(&w[0], &w[1], &w[2]))
        .collect::<Result<Vec<_>>>()?;
    let levels = torralba_levels(&ks, lambda0, lambda1)?;
    let gaps = levels.gaps[..bodies.len() - 1].to_vec();
    let family = FoliationFamily::from_gaps(bodies, lambda0, gaps)?;
    Ok((family, levels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorralbaConstruction {
    /// Clockwise angle from the start of the first-period trajectory to its
    /// end on the boundary of `C_4`.
    pub theta_hat: f64,
    pub step_one: Orbit,
    pub family: FoliationFamily,
    pub k: f64,
    pub ks: Vec<f64>,
}

/// Measures the deflection on the first period from `(0, 1)` and builds the
/// spiral family with that angle over `periods` periods.
pub fn torralba_spiral_family(
    ellipse: EllipseSpec,
    periods: usize,
    m: usize,
    level_fraction: f64,
) -> Result<TorralbaConstruction> {
    if periods == 0 {
        return Err(Error::Construction("need at least one period".into()));
    }
    let base = base_quadruple(ellipse, m)?;
    let step_bodies = spiral_bodies(&base, 0.0, 1)?;
    let (step_family, _) = family_with_levels(step_bodies, 1.0, 0.5)?;
    let a0 = Vec2::new(0.0, 1.0);
    let step_one = orthogonal_trajectory(&step_family, a0, level_fraction)?;
    let a4 = step_one.polyline.last();
    let theta_hat = -signed_angle(a0, a4);
    let bodies = spiral_bodies(&base, theta_hat, periods)?;
    let (family, levels) = family_with_levels(bodies, 1.0, 0.5)?;
    let ks = family
        .bodies
        .windows(3)
        .map(|w| compute_k(&w[0], &w[1], &w[2]))
        .collect::<Result<Vec<_>>>()?;
    Ok(TorralbaConstruction {
        theta_hat,
        step_one,
        family,
        k: levels.k,
        ks,
    })
}

/// Level-set function of a family as a field on the whole plane.
#[derive(Debug, Clone)]
pub struct TorralbaField {
    pub family: FoliationFamily,
}

impl TorralbaField {
    pub fn new(family: FoliationFamily) -> Self {
        Self { family }
    }

    fn shell_at(&self, x: Vec2) -> Option<usize> {
        if self.family.len() == 1 {
            return None;
        }
        match self.family.shell_of(x) {
            Ok(s) => s,
            Err(_) => Some(0),
        }
    }

    fn active_normals(&self, x: Vec2, eps: f64) -> Vec<Vec2> {
        let Some(k) = self.shell_at(x) else {
            return vec![Vec2::ZERO];
        };
        let fam = &self.family;
        let m = fam.grid_size();
        let r: Vec<f64> = fam.ratios(k, x).collect();
        let s = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gap = fam.gaps[k];
        let tol = eps / gap;
        (0..m)
            .filter(|&j| r[j] >= s - tol)
            .map(|j| {
                let den = fam.bodies[k].support[j] - fam.bodies[k + 1].support[j];
                grid_dir(j, m) * (gap / den)
            })
            .collect()
    }
}

impl ScalarField for TorralbaField {
    fn name(&self) -> String {
        format!("torralba:{}", (self.family.len() - 1) / 4)
    }

    fn value(&self, x: Vec2) -> f64 {
        self.family.last_level() + self.family.extended_offset(x)
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        self.active_normals(x, 0.0)[0]
    }

    fn declared_class(&self) -> FieldClass {
        FieldClass::Convex
    }

    fn coercive(&self) -> bool {
        true
    }

    fn min_norm_subgradient(&self, x: Vec2, shift: Vec2, eps: f64) -> Vec2 {
        let pts: Vec<Vec2> = self
            .active_normals(x, eps)
            .into_iter()
            .map(|g| g + shift)
            .collect();
        min_norm_in_hull(&pts)
    }
}

/// JSON view of a family: levels and body labels, bodies stored separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub levels: Vec<f64>,
    pub gaps: Vec<f64>,
    pub bodies: Vec<String>,
    pub grid_size: usize,
}

impl From<&FoliationFamily> for FamilySummary {
    fn from(f: &FoliationFamily) -> Self {
        Self {
            levels: f.levels.clone(),
            gaps: f.gaps.clone(),
            bodies: f.bodies.iter().map(|b| b.label.clone()).collect(),
            grid_size: f.grid_size(),
        }
    }
}
