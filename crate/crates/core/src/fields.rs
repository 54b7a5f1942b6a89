//! Planar test functions with analytic gradients and sampled class checks.

use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{min_norm_in_hull, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldClass {
    Convex,
    Quasiconvex,
    Neither,
}

/// A differentiable (or convex, piecewise smooth) function of the plane.
pub trait ScalarField: Send + Sync {
    fn name(&self) -> String;

    fn value(&self, x: Vec2) -> f64;

    /// Gradient, or one element of the subdifferential at kinks.
    fn gradient(&self, x: Vec2) -> Vec2;

    fn declared_class(&self) -> FieldClass;

    fn coercive(&self) -> bool {
        false
    }

    /// A positive multiple of the gradient, chosen to stay representable
    /// where the gradient itself underflows. Defaults to the gradient.
    fn scaled_gradient(&self, x: Vec2) -> Vec2 {
        self.gradient(x)
    }

    /// Minimum-norm element of `shift + D` where `D` approximates the
    /// `eps`-subdifferential at `x`. Smooth fields ignore `eps`.
    fn min_norm_subgradient(&self, x: Vec2, shift: Vec2, _eps: f64) -> Vec2 {
        self.gradient(x) + shift
    }

    /// Points where the field is not differentiable.
    fn kinks(&self) -> Vec<Vec2> {
        Vec::new()
    }

    /// Whether orbits are expected to wind around their limit.
    fn is_spiral_like(&self) -> bool {
        false
    }
}

/// `f(x) = 1/2 <A (x - c), x - c>` with `A` symmetric positive definite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticField {
    pub a: [[f64; 2]; 2],
    pub center: Vec2,
}

impl QuadraticField {
    pub fn new(a: [[f64; 2]; 2], center: Vec2) -> Result<Self> {
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        if a.iter().flatten().any(|v| !v.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidField(
                "non-finite quadratic coefficients".into(),
            ));
        }
        if (a[0][1] - a[1][0]).abs() > 1e-12 * scale {
            return Err(Error::InvalidField(format!(
                "matrix is not symmetric ({} vs {})",
                a[0][1], a[1][0]
            )));
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !(a[0][0] > 0.0 && det > 0.0) {
            return Err(Error::InvalidField(
                "matrix is not positive definite".into(),
            ));
        }
        Ok(Self { a, center })
    }

    pub fn diagonal(a11: f64, a22: f64) -> Result<Self> {
        Self::new([[a11, 0.0], [0.0, a22]], Vec2::ZERO)
    }

    pub fn apply(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            self.a[0][0] * v.x + self.a[0][1] * v.y,
            self.a[1][0] * v.x + self.a[1][1] * v.y,
        )
    }

    /// Eigenvalues in increasing order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let tr = self.a[0][0] + self.a[1][1];
        let det = self.a[0][0] * self.a[1][1] - self.a[0][1] * self.a[1][0];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        (0.5 * tr - disc, 0.5 * tr + disc)
    }
}

impl ScalarField for QuadraticField {
    fn name(&self) -> String {
        format!(
            "quadratic:{:?},{:?},{:?},{:?}",
            self.a[0][0], self.a[0][1], self.a[1][0], self.a[1][1]
        )
    }

    fn value(&self, x: Vec2) -> f64 {
        let d = x - self.center;
        0.5 * d.dot(self.apply(d))
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        self.apply(x - self.center)
    }

    fn declared_class(&self) -> FieldClass {
        FieldClass::Convex
    }

    fn coercive(&self) -> bool {
        true
    }
}

/// `f(r, theta) = exp(-1/r) (1 + r + sin(1/r + theta))`, `f(O) = 0`. Smooth
/// and positive away from the origin, without critical points there, yet
/// its gradient orbits spiral into `O` with infinite length.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SpiralField;

impl SpiralField {
    /// Gradient with the common factor `exp(-1/r)` removed.
    fn reduced_gradient(x: Vec2) -> Vec2 {
        let r = x.norm();
        if r == 0.0 {
            return Vec2::ZERO;
        }
        let th = x.angle();
        let psi = 1.0 / r + th;
        let (s, c) = psi.sin_cos();
        let dr = (1.0 + r + s - c) / (r * r) + 1.0;
        let dth = c / r;
        let er = x / r;
        dr * er + dth * er.perp()
    }
}

impl ScalarField for SpiralField {
    fn name(&self) -> String {
        "spiral".into()
    }

    fn value(&self, x: Vec2) -> f64 {
        let r = x.norm();
        if r == 0.0 {
            return 0.0;
        }
        (-1.0 / r).exp() * (1.0 + r + (1.0 / r + x.angle()).sin())
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        let r = x.norm();
        if r == 0.0 {
            return Vec2::ZERO;
        }
        // exp underflows cleanly to zero for r below ~1/745.
        Self::reduced_gradient(x) * (-1.0 / r).exp()
    }

    fn scaled_gradient(&self, x: Vec2) -> Vec2 {
        Self::reduced_gradient(x)
    }

    fn declared_class(&self) -> FieldClass {
        FieldClass::Neither
    }

    fn coercive(&self) -> bool {
        true
    }

    fn is_spiral_like(&self) -> bool {
        true
    }
}

/// `f(x, y) = x^3`: quasiconvex (monotone in one variable) but not convex.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CubicX;

impl ScalarField for CubicX {
    fn name(&self) -> String {
        "cubic-x".into()
    }

    fn value(&self, x: Vec2) -> f64 {
        x.x * x.x * x.x
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        Vec2::new(3.0 * x.x * x.x, 0.0)
    }

    fn declared_class(&self) -> FieldClass {
        FieldClass::Quasiconvex
    }
}

/// `f(x) = |x|`, nonsmooth at the origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormField;

impl ScalarField for NormField {
    fn name(&self) -> String {
        "norm".into()
    }

    fn value(&self, x: Vec2) -> f64 {
        x.norm()
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        x.normalized().unwrap_or(Vec2::ZERO)
    }

    fn declared_class(&self) -> FieldClass {
        FieldClass::Convex
    }

    fn coercive(&self) -> bool {
        true
    }

    fn min_norm_subgradient(&self, x: Vec2, shift: Vec2, eps: f64) -> Vec2 {
        let r = x.norm();
        if r > eps {
            return x / r + shift;
        }
        // Unit disk plus shift: nearest point to the origin.
        let s = shift.norm();
        if s <= 1.0 {
            Vec2::ZERO
        } else {
            shift * (1.0 - 1.0 / s)
        }
    }

    fn kinks(&self) -> Vec<Vec2> {
        vec![Vec2::ZERO]
    }
}

/// Pointwise maximum of affine functions `<a_i, x> + b_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxAffine {
    pub pieces: Vec<(Vec2, f64)>,
}

impl MaxAffine {
    pub fn new(pieces: Vec<(Vec2, f64)>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidField(
                "max-affine needs at least one piece".into(),
            ));
        }
        if pieces.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::InvalidField("non-finite affine piece".into()));
        }
        Ok(Self { pieces })
    }

    fn piece(&self, i: usize, x: Vec2) -> f64 {
        let (a, b) = self.pieces[i];
        a.dot(x) + b
    }

    fn active(&self, x: Vec2, eps: f64) -> Vec<Vec2> {
        let f = self.value(x);
        self.pieces
            .iter()
            .filter(|(a, b)| a.dot(x) + b >= f - eps)
            .map(|(a, _)| *a)
            .collect()
    }
}

impl ScalarField for MaxAffine {
    fn name(&self) -> String {
        let parts: Vec<String> = self
            .pieces
            .iter()
            .map(|(a, b)| format!("{:?},{:?},{:?}", a.x, a.y, b))
            .collect();
        format!("max-affine:{}", parts.join(";"))
    }

    fn value(&self, x: Vec2) -> f64 {
        (0..self.pieces.len())
            .map(|i| self.piece(i, x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        let mut best = 0;
        for i in 1..self.pieces.len() {
            if self.piece(i, x) > self.piece(best, x) {
                best = i;
            }
        }
        self.pieces[best].0
    }

    fn declared_class(&self) -> FieldClass {
        FieldClass::Convex
    }

    fn coercive(&self) -> bool {
        // Coercive iff the origin is interior to the hull of the slopes:
        // every direction has a piece that increases along it.
        (0..360).all(|k| {
            let u = Vec2::unit(2.0 * PI * k as f64 / 360.0);
            self.pieces.iter().any(|(a, _)| a.dot(u) > 0.0)
        }) && self.pieces.len() >= 3
    }

    fn min_norm_subgradient(&self, x: Vec2, shift: Vec2, eps: f64) -> Vec2 {
        let pts: Vec<Vec2> = self.active(x, eps).into_iter().map(|a| a + shift).collect();
        min_norm_in_hull(&pts)
    }

    fn kinks(&self) -> Vec<Vec2> {
        let n = self.pieces.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                for k in j + 1..n {
                    let (ai, bi) = self.pieces[i];
                    let (aj, bj) = self.pieces[j];
                    let (ak, bk) = self.pieces[k];
                    // (ai - aj) . x = bj - bi, (ai - ak) . x = bk - bi.
                    let (u, v) = (ai - aj, ai - ak);
                    let det = u.cross(v);
                    if det.abs() < 1e-14 {
                        continue;
                    }
                    let (r1, r2) = (bj - bi, bk - bi);
                    let x = Vec2::new(r1 * v.y - r2 * u.y, u.x * r2 - v.x * r1) / det;
                    let f = self.value(x);
                    if (self.piece(i, x) - f).abs() <= 1e-12 * (1.0 + f.abs()) {
                        out.push(x);
                    }
                }
            }
        }
        out
    }
}

fn parse_floats(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("bad number {t:?}: {e}")))
        })
        .collect()
}

/// Parses a field specification such as `quadratic:1,0,0,4`, `spiral`,
/// `cubic-x`, `norm` or `max-affine:1,0,0;-1,1,0;-1,-1,0`. A quadratic may
/// carry a center as `quadratic:1,0,0,4@0.5,0`.
pub fn parse_field(spec: &str) -> Result<Box<dyn ScalarField>> {
    let spec = spec.trim();
    let (head, args) = match spec.split_once(':') {
        Some((h, a)) => (h, Some(a)),
        None => (spec, None),
    };
    match (head, args) {
        ("spiral", None) => Ok(Box::new(SpiralField)),
        ("cubic-x", None) => Ok(Box::new(CubicX)),
        ("norm", None) => Ok(Box::new(NormField)),
        ("quadratic", Some(args)) => {
            let (m, c) = match args.split_once('@') {
                Some((m, c)) => (m, Some(c)),
                None => (args, None),
            };
            let v = parse_floats(m)?;
            if v.len() != 4 {
                return Err(Error::Parse(format!(
                    "quadratic needs 4 entries, got {}",
                    v.len()
                )));
            }
            let center = match c {
                Some(c) => {
                    let c = parse_floats(c)?;
                    if c.len() != 2 {
                        return Err(Error::Parse("quadratic center needs 2 entries".into()));
                    }
                    Vec2::new(c[0], c[1])
                }
                None => Vec2::ZERO,
            };
            Ok(Box::new(QuadraticField::new(
                [[v[0], v[1]], [v[2], v[3]]],
                center,
            )?))
        }
        ("max-affine", Some(args)) => {
            let pieces = args
                .split(';')
                .map(|p| {
                    let v = parse_floats(p)?;
                    if v.len() != 3 {
                        return Err(Error::Parse(format!("affine piece {p:?} needs ax,ay,b")));
                    }
                    Ok((Vec2::new(v[0], v[1]), v[2]))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Box::new(MaxAffine::new(pieces)?))
        }
        _ => Err(Error::Parse(format!("unknown field {spec:?}"))),
    }
}

/// Writes `x,y,f` rows on a regular `nx` by `ny` grid over the box.
pub fn write_grid_csv<W: Write>(
    field: &dyn ScalarField,
    lo: Vec2,
    hi: Vec2,
    nx: usize,
    ny: usize,
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "f"])?;
    let step = |a: f64, b: f64, n: usize, i: usize| {
        if n <= 1 {
            a
        } else {
            a + (b - a) * i as f64 / (n - 1) as f64
        }
    };
    for j in 0..ny {
        for i in 0..nx {
            let p = Vec2::new(step(lo.x, hi.x, nx, i), step(lo.y, hi.y, ny, j));
            w.write_record(&[
                format!("{:?}", p.x),
                format!("{:?}", p.y),
                format!("{:?}", field.value(p)),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Outcome of a randomized class check. A pass is evidence, not proof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleVerdict {
    pub passed: bool,
    pub counterexample: Option<(Vec2, Vec2)>,
    pub seed: u64,
    pub samples: usize,
}

fn sample_disk(rng: &mut ChaCha8Rng, radius: f64) -> Vec2 {
    let r = radius * rng.gen::<f64>().sqrt();
    Vec2::from_polar(r, rng.gen_range(0.0..2.0 * PI))
}

/// Looks for `x, y` in the disk of radius `domain_radius` with
/// `<grad f(x), y - x> > 0` but `f(y) < f(x)`.
pub fn check_quasiconvex_sampled(
    field: &dyn ScalarField,
    probe_pairs: usize,
    domain_radius: f64,
    seed: u64,
) -> SampleVerdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probe_pairs {
        let x = sample_disk(&mut rng, domain_radius);
        let y = sample_disk(&mut rng, domain_radius);
        let g = field.scaled_gradient(x);
        let d = y - x;
        let slope = g.dot(d);
        let (fx, fy) = (field.value(x), field.value(y));
        if slope > 1e-9 * g.norm() * d.norm() && fy < fx - 1e-12 * fx.abs().max(f64::MIN_POSITIVE) {
            return SampleVerdict {
                passed: false,
                counterexample: Some((x, y)),
                seed,
                samples: probe_pairs,
            };
        }
    }
    SampleVerdict {
        passed: true,
        counterexample: None,
        seed,
        samples: probe_pairs,
    }
}

/// Midpoint convexity on random pairs in the disk of radius `domain_radius`:
/// `f((x+y)/2) <= (f(x)+f(y))/2 + tol`.
pub fn check_convex_sampled(
    field: &dyn ScalarField,
    probes: usize,
    domain_radius: f64,
    tol: f64,
    seed: u64,
) -> SampleVerdict {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..probes {
        let x = sample_disk(&mut rng, domain_radius);
        let y = sample_disk(&mut rng, domain_radius);
        let mid = field.value(x.midpoint(y));
        if mid > 0.5 * (field.value(x) + field.value(y)) + tol {
            return SampleVerdict {
                passed: false,
                counterexample: Some((x, y)),
                seed,
                samples: probes,
            };
        }
    }
    SampleVerdict {
        passed: true,
        counterexample: None,
        seed,
        samples: probes,
    }
}
