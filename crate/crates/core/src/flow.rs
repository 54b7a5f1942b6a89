//! Numerical orbits of `x' = -grad f(x)` and of the proximal (backward Euler)
//! discretization of the subgradient inclusion.
//!
//! Three integrators are available: fixed-step RK4, adaptive Dormand-Prince
//! 5(4), and a linearly implicit Rosenbrock 2(3) pair for stiff fields. Steps
//! are shortened to land exactly on the uniform sample grid, so orbits are
//! sampled at `t = k * spacing` without interpolation.
//!
//! Orbits can be parametrized by time or reparametrized so the speed is the
//! distance to a center. The latter keeps the parameter close to the polar
//! angle on near-circular motion and sidesteps gradients that underflow.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::curve::{check_main_bound, check_self_contracted, MainBound, Polyline, ScVerdict};
use crate::error::{Error, Result};
use crate::fields::{FieldClass, ScalarField};
use crate::geom::{wrap_angle, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
    Adaptive,
    Rosenbrock,
    Proximal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Parametrization {
    /// `x' = -grad f`.
    Time,
    /// Unit speed along `-grad f`.
    ArcLength,
    /// Speed `|x - center|` along `-grad f`.
    Angular { center: Vec2 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub method: Method,
    /// Fixed step (RK4, proximal) or initial step guess (adaptive).
    pub step: f64,
    /// Absolute and relative tolerance of the adaptive methods.
    pub tolerance: f64,
    pub t_max: f64,
    /// Stop once the (scaled) gradient norm drops below this.
    pub stop_gradient_norm: f64,
    /// Stop once within this distance of `limit`.
    pub stop_radius: f64,
    pub limit: Option<Vec2>,
    pub parametrization: Parametrization,
    /// Output spacing; `None` picks `t_max / 1000`, or 64 samples per unit
    /// of `2 pi` for spiral-like fields.
    pub sample_spacing: Option<f64>,
    pub max_steps: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            method: Method::Adaptive,
            step: 1e-3,
            tolerance: 1e-9,
            t_max: 5.0,
            stop_gradient_norm: 1e-12,
            stop_radius: 1e-10,
            limit: None,
            parametrization: Parametrization::Time,
            sample_spacing: None,
            max_steps: 50_000_000,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return bad("step must be positive");
        }
        if matches!(self.method, Method::Adaptive | Method::Rosenbrock) && !(self.tolerance > 0.0) {
            return bad("tolerance must be positive");
        }
        if !(self.stop_gradient_norm >= 0.0 && self.stop_radius >= 0.0) {
            return bad("stop thresholds must be nonnegative");
        }
        if let Some(s) = self.sample_spacing {
            if !(s > 0.0 && s.is_finite()) {
                return bad("sample spacing must be positive");
            }
        }
        if self.method == Method::Proximal {
            return bad("use integrate_proximal for the proximal method");
        }
        Ok(())
    }

    fn spacing(&self, spiral_like: bool) -> f64 {
        match self.sample_spacing {
            Some(s) => s,
            None if spiral_like => (2.0 * PI / 64.0).min(self.t_max),
            None => self.t_max / 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminatedBy {
    TimeLimit,
    GradientVanished,
    ReachedLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub polyline: Polyline,
    pub f_values: Vec<f64>,
    pub terminated_by: TerminatedBy,
    /// Integrator steps (or proximal iterations) taken.
    pub steps: usize,
}

impl Orbit {
    /// Prefix of the orbit with parameter `<= t`.
    pub fn truncated(&self, t: f64) -> Result<Orbit> {
        let n = self.polyline.params().partition_point(|&s| s <= t).max(1);
        Ok(Orbit {
            polyline: self.polyline.slice(0..n)?,
            f_values: self.f_values[..n].to_vec(),
            terminated_by: TerminatedBy::TimeLimit,
            steps: self.steps,
        })
    }
}

struct System<'a> {
    field: &'a dyn ScalarField,
    param: Parametrization,
}

/// The angular parametrization integrates in coordinates `(1/r, theta)`
/// about its center, with `theta` unwrapped. Orbits that spiral along a
/// valley `1/r + theta = const` then move along a straight line, and the
/// stiff direction across the valley stays fixed.
impl System<'_> {
    fn polar_center(&self) -> Option<Vec2> {
        match self.param {
            Parametrization::Angular { center } => Some(center),
            _ => None,
        }
    }

    fn to_state(&self, x: Vec2) -> Result<Vec2> {
        match self.polar_center() {
            None => Ok(x),
            Some(c) => {
                let d = x - c;
                if d == Vec2::ZERO {
                    return Err(Error::InvalidConfig(
                        "orbit starts at the angular center".into(),
                    ));
                }
                Ok(Vec2::new(1.0 / d.norm(), d.angle()))
            }
        }
    }

    fn to_point(&self, z: Vec2) -> Vec2 {
        match self.polar_center() {
            None => z,
            Some(c) => c + Vec2::from_polar(1.0 / z.x, z.y),
        }
    }

    fn velocity(&self, x: Vec2) -> Vec2 {
        match self.param {
            Parametrization::Time => -self.field.gradient(x),
            Parametrization::ArcLength | Parametrization::Angular { .. } => -self
                .field
                .scaled_gradient(x)
                .normalized()
                .unwrap_or(Vec2::ZERO),
        }
    }

    fn rhs(&self, z: Vec2) -> Result<Vec2> {
        let x = self.to_point(z);
        let v = self.velocity(x);
        let out = match self.polar_center() {
            None => v,
            Some(_) => {
                // With speed r along the unit direction v: theta' = v . e_theta
                // and (1/r)' = -(v . e_r) / r.
                let er = Vec2::unit(z.y);
                Vec2::new(-z.x * v.dot(er), v.dot(er.perp()))
            }
        };
        if out.is_finite() && x.is_finite() {
            Ok(out)
        } else {
            Err(Error::FieldEvaluation(x))
        }
    }

    /// Local error relative to the tolerance; below one is acceptable.
    fn error_ratio(&self, err: Vec2, z: Vec2, znew: Vec2, tol: f64) -> f64 {
        match self.polar_center() {
            None => err.norm() / (tol + tol * z.norm().max(znew.norm())),
            // Relative radial error and absolute angular error, both
            // measured as relative displacements.
            Some(_) => (err.x / z.x.min(znew.x)).hypot(err.y) / tol,
        }
    }

    fn fd_steps(&self, z: Vec2) -> Vec2 {
        match self.polar_center() {
            None => {
                let h = 1e-8 * z.norm().max(1e-300);
                Vec2::new(h, h)
            }
            // Features across a spiral valley have width ~ 1/u in both
            // coordinates, so the steps are absolute.
            Some(_) => Vec2::new(1e-8, 1e-8),
        }
    }

    fn stop_norm(&self, x: Vec2) -> f64 {
        match self.param {
            Parametrization::Time => self.field.gradient(x).norm(),
            _ => self.field.scaled_gradient(x).norm(),
        }
    }
}

fn rk4_step(sys: &System, y: Vec2, h: f64) -> Result<Vec2> {
    let k1 = sys.rhs(y)?;
    let k2 = sys.rhs(y + k1 * (0.5 * h))?;
    let k3 = sys.rhs(y + k2 * (0.5 * h))?;
    let k4 = sys.rhs(y + k3 * h)?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One Dormand-Prince step from `y` with `k1 = f(y)`. Returns the new state,
/// its derivative (first stage of the next step) and the error estimate.
fn dopri_step(sys: &System, y: Vec2, k1: Vec2, h: f64) -> Result<(Vec2, Vec2, Vec2)> {
    let k2 = sys.rhs(y + k1 * (h * A21))?;
    let k3 = sys.rhs(y + (k1 * A31 + k2 * A32) * h)?;
    let k4 = sys.rhs(y + (k1 * A41 + k2 * A42 + k3 * A43) * h)?;
    let k5 = sys.rhs(y + (k1 * A51 + k2 * A52 + k3 * A53 + k4 * A54) * h)?;
    let k6 = sys.rhs(y + (k1 * A61 + k2 * A62 + k3 * A63 + k4 * A64 + k5 * A65) * h)?;
    let ynew = y + (k1 * B1 + k3 * B3 + k4 * B4 + k5 * B5 + k6 * B6) * h;
    let k7 = sys.rhs(ynew)?;
    let err = (k1 * E1 + k3 * E3 + k4 * E4 + k5 * E5 + k6 * E6 + k7 * E7) * h;
    Ok((ynew, k7, err))
}

type Mat2 = [[f64; 2]; 2];

fn jacobian(sys: &System, y: Vec2, f0: Vec2) -> Result<Mat2> {
    let hj = sys.fd_steps(y);
    let fx = sys.rhs(y + Vec2::new(hj.x, 0.0))?;
    let fy = sys.rhs(y + Vec2::new(0.0, hj.y))?;
    let (dx, dy) = ((fx - f0) / hj.x, (fy - f0) / hj.y);
    Ok([[dx.x, dy.x], [dx.y, dy.y]])
}

fn solve2(m: &Mat2, b: Vec2) -> Option<Vec2> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    Some(Vec2::new(
        (m[1][1] * b.x - m[0][1] * b.y) / det,
        (m[0][0] * b.y - m[1][0] * b.x) / det,
    ))
}

/// Rosenbrock 2(3) step (the modified pair with `d = 1/(2 + sqrt 2)`).
/// Returns the new state, its derivative and the error estimate, or `None`
/// for a singular iteration matrix.
fn rosenbrock_step(
    sys: &System,
    y: Vec2,
    f0: Vec2,
    jac: &Mat2,
    h: f64,
) -> Result<Option<(Vec2, Vec2, Vec2)>> {
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;
    let hd = h * d;
    let w = [
        [1.0 - hd * jac[0][0], -hd * jac[0][1]],
        [-hd * jac[1][0], 1.0 - hd * jac[1][1]],
    ];
    let Some(k1) = solve2(&w, f0) else {
        return Ok(None);
    };
    let f1 = sys.rhs(y + k1 * (0.5 * h))?;
    let Some(k2) = solve2(&w, f1 - k1) else {
        return Ok(None);
    };
    let k2 = k2 + k1;
    let ynew = y + k2 * h;
    let f2 = sys.rhs(ynew)?;
    let Some(k3) = solve2(&w, f2 - (k2 - f1) * e32 - (k1 - f0) * 2.0) else {
        return Ok(None);
    };
    let err = (k1 - k2 * 2.0 + k3) * (h / 6.0);
    Ok(Some((ynew, f2, err)))
}

struct Recorder<'a> {
    field: &'a dyn ScalarField,
    ts: Vec<f64>,
    pts: Vec<Vec2>,
    fs: Vec<f64>,
    steps: usize,
}

impl Recorder<'_> {
    fn push(&mut self, t: f64, y: Vec2) {
        if self.ts.last().is_none_or(|&s| t > s) {
            self.ts.push(t);
            self.pts.push(y);
            self.fs.push(self.field.value(y));
        }
    }

    fn finish(self, terminated_by: TerminatedBy) -> Result<Orbit> {
        Ok(Orbit {
            polyline: Polyline::new(self.ts, self.pts)?,
            f_values: self.fs,
            terminated_by,
            steps: self.steps,
        })
    }
}

/// Integrates the (reparametrized) gradient system from `x0` until a stop
/// rule fires.
pub fn integrate_gradient(field: &dyn ScalarField, x0: Vec2, config: &FlowConfig) -> Result<Orbit> {
    config.validate()?;
    if !x0.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "initial point {x0} is not finite"
        )));
    }
    let sys = System {
        field,
        param: config.parametrization,
    };
    let spacing = config.spacing(field.is_spiral_like());
    let mut rec = Recorder {
        field,
        ts: Vec::new(),
        pts: Vec::new(),
        fs: Vec::new(),
        steps: 0,
    };
    let mut t = 0.0;
    let mut y = sys.to_state(x0)?;
    rec.push(0.0, x0);

    let stop = |z: Vec2| -> Option<TerminatedBy> {
        let y = sys.to_point(z);
        if let Some(limit) = config.limit {
            if y.dist(limit) < config.stop_radius {
                return Some(TerminatedBy::ReachedLimit);
            }
        }
        if sys.stop_norm(y) < config.stop_gradient_norm {
            return Some(TerminatedBy::GradientVanished);
        }
        None
    };
    if let Some(why) = stop(y) {
        return rec.finish(why);
    }

    let mut k = 1usize;
    let mut h = match config.method {
        Method::Rk4 => config.step,
        _ => config.step.min(spacing),
    };
    let mut f0 = sys.rhs(y)?;
    let (order_exp, tol) = match config.method {
        Method::Rosenbrock => (1.0 / 3.0, config.tolerance),
        _ => (1.0 / 5.0, config.tolerance),
    };
    let mut jac: Option<Mat2> = None;

    loop {
        let target = (k as f64 * spacing).min(config.t_max);
        let h_try = h.min(target - t);
        let landing = h_try >= target - t;
        let (ynew, fnew, accepted, err_ratio) = match config.method {
            Method::Rk4 => {
                let yn = rk4_step(&sys, y, h_try)?;
                (yn, Vec2::ZERO, true, 0.0)
            }
            Method::Adaptive => {
                let (yn, fnew, err) = dopri_step(&sys, y, f0, h_try)?;
                let r = sys.error_ratio(err, y, yn, tol);
                (yn, fnew, r <= 1.0, r)
            }
            Method::Rosenbrock => {
                let j = match jac {
                    Some(j) => j,
                    None => {
                        let j = jacobian(&sys, y, f0)?;
                        jac = Some(j);
                        j
                    }
                };
                match rosenbrock_step(&sys, y, f0, &j, h_try)? {
                    Some((yn, fnew, err)) => {
                        let r = sys.error_ratio(err, y, yn, tol);
                        (yn, fnew, r <= 1.0, r)
                    }
                    None => (y, f0, false, 4.0),
                }
            }
            Method::Proximal => unreachable!("rejected by validate"),
        };
        rec.steps += 1;
        if rec.steps > config.max_steps {
            return Err(Error::Stiffness {
                t,
                h: h_try,
                partial: Box::new(rec.finish(TerminatedBy::TimeLimit)?),
            });
        }
        if !accepted {
            h = h_try * (0.9 * err_ratio.powf(-order_exp)).clamp(0.1, 0.9);
            if h < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::Stiffness {
                    t,
                    h,
                    partial: Box::new(rec.finish(TerminatedBy::TimeLimit)?),
                });
            }
            continue;
        }
        if !ynew.is_finite() {
            return Err(Error::FieldEvaluation(y));
        }
        t = if landing { target } else { t + h_try };
        y = ynew;
        match config.method {
            Method::Rk4 => {}
            _ => {
                f0 = fnew;
                jac = None;
                let grow = if err_ratio == 0.0 {
                    5.0
                } else {
                    (0.9 * err_ratio.powf(-order_exp)).clamp(0.2, 5.0)
                };
                // A step cut short to land on a sample does not inform the
                // controller.
                h = if landing {
                    h.max(h_try * grow)
                } else {
                    h_try * grow
                };
            }
        }
        if landing {
            rec.push(t, sys.to_point(y));
            k += 1;
        }
        if let Some(why) = stop(y) {
            rec.push(t, sys.to_point(y));
            return rec.finish(why);
        }
        if t >= config.t_max {
            rec.push(t, sys.to_point(y));
            return rec.finish(TerminatedBy::TimeLimit);
        }
    }
}

const PROX_MAX_INNER: usize = 20_000;

/// Solves `argmin_y f(y) + |y - x|^2 / (2 h)` by steepest descent on the
/// `eps`-subdifferential with Armijo backtracking, shrinking `eps` as the
/// direction vanishes. Nonsmooth points of the field are tried as final
/// candidates.
pub fn proximal_step(field: &dyn ScalarField, x: Vec2, h: f64) -> Result<Vec2> {
    let phi = |y: Vec2| field.value(y) + (y - x).norm_sq() / (2.0 * h);
    let fscale = 1.0 + field.value(x).abs();
    let xtol = 1e-12 * (1.0 + x.norm());
    let eps_floor = 1e-13 * fscale;
    let mut eps = 1e-3 * fscale;
    let mut y = x;
    let mut py = phi(y);
    let mut residual = f64::INFINITY;
    let mut converged = false;
    for _ in 0..PROX_MAX_INNER {
        let g = field.min_norm_subgradient(y, (y - x) / h, eps);
        let gn = g.norm();
        residual = h * gn;
        if residual <= xtol {
            if eps <= eps_floor {
                converged = true;
                break;
            }
            eps = (eps * 0.1).max(eps_floor);
            continue;
        }
        let mut t = 2.0 * h;
        let mut moved = false;
        for _ in 0..80 {
            let cand = y - g * t;
            let pc = phi(cand);
            if pc < py && pc <= py - 1e-4 * t * gn * gn {
                y = cand;
                py = pc;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            // Function values no longer resolve the decrease: accept steps
            // that shrink the subgradient without a visible increase.
            let noise = 8.0 * f64::EPSILON * py.abs().max(1.0);
            let mut t = 2.0 * h;
            for _ in 0..60 {
                let cand = y - g * t;
                let pc = phi(cand);
                if pc <= py + noise
                    && field.min_norm_subgradient(cand, (cand - x) / h, eps).norm() < 0.9 * gn
                {
                    y = cand;
                    py = pc;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
        }
        if !moved {
            if eps > eps_floor {
                eps = (eps * 0.1).max(eps_floor);
                continue;
            }
            // No representable descent left at the finest resolution.
            converged = residual <= 1e-6 * (1.0 + x.norm());
            break;
        }
    }
    for k in field.kinks() {
        if k.dist(y) <= 1e-6 * (1.0 + x.norm()) && phi(k) <= py {
            y = k;
            py = phi(k);
            converged = true;
        }
    }
    if converged {
        Ok(y)
    } else {
        Err(Error::ProximalSolve { residual })
    }
}

/// Proximal iterates `x_{k+1} = prox_{step f}(x_k)` with parameters
/// `k * step`. Stops early when an iterate repeats exactly.
pub fn integrate_proximal(
    field: &dyn ScalarField,
    x0: Vec2,
    step: f64,
    iterations: usize,
) -> Result<Orbit> {
    if field.declared_class() != FieldClass::Convex {
        return Err(Error::InvalidConfig(format!(
            "proximal iterates require a convex field, {} is not",
            field.name()
        )));
    }
    if !(step > 0.0 && step.is_finite()) || iterations == 0 {
        return Err(Error::InvalidConfig(
            "step must be positive and iterations nonzero".into(),
        ));
    }
    let mut rec = Recorder {
        field,
        ts: vec![0.0],
        pts: vec![x0],
        fs: vec![field.value(x0)],
        steps: 0,
    };
    let mut x = x0;
    for k in 1..=iterations {
        let next = proximal_step(field, x, step)?;
        rec.steps += 1;
        if next == x {
            return rec.finish(TerminatedBy::GradientVanished);
        }
        x = next;
        rec.push(k as f64 * step, x);
    }
    rec.finish(TerminatedBy::TimeLimit)
}

/// Distance at time `t_end` between proximal orbits with steps `h` and `h/2`.
pub fn proximal_richardson(
    field: &dyn ScalarField,
    x0: Vec2,
    step: f64,
    t_end: f64,
) -> Result<f64> {
    let n = (t_end / step).round().max(1.0) as usize;
    let coarse = integrate_proximal(field, x0, step, n)?;
    let fine = integrate_proximal(field, x0, 0.5 * step, 2 * n)?;
    Ok(coarse.polyline.last().dist(fine.polyline.last()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    pub verdict: ScVerdict,
    pub bound: MainBound,
}

pub fn orbit_self_contracted_report(orbit: &Orbit, tolerance: f64) -> Result<OrbitReport> {
    Ok(OrbitReport {
        verdict: check_self_contracted(&orbit.polyline, tolerance)?,
        bound: check_main_bound(&orbit.polyline),
    })
}

/// Total signed turns of the curve around `center`.
pub fn winding_number(curve: &Polyline, center: Vec2) -> Result<f64> {
    Ok(winding_angle(curve, center)? / (2.0 * PI))
}

/// Total signed angle swept around `center`, in radians.
pub fn winding_angle(curve: &Polyline, center: Vec2) -> Result<f64> {
    let pts = curve.points();
    if let Some(i) = pts.iter().position(|&p| p == center) {
        return Err(Error::SingularWinding(i));
    }
    Ok(pts
        .windows(2)
        .map(|w| wrap_angle((w[1] - center).angle() - (w[0] - center).angle()))
        .sum())
}

/// Deviation of an angularly parametrized spiral orbit from the reference
/// spiral `r = 1/(3 pi/2 + t)`, `theta = -t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralDeviation {
    /// Max over samples of `|r - r_ref(t)| / r_ref(t)`.
    pub max_radius_rel: f64,
    /// Max over samples of `|theta_unwrapped + t|`.
    pub max_angle: f64,
    /// Max over samples of `|r (3 pi/2 - theta) - 1|`: distance to the
    /// reference curve itself, irrespective of timing.
    pub max_shape_rel: f64,
}

pub fn spiral_deviation(orbit: &Orbit) -> Result<SpiralDeviation> {
    let pts = orbit.polyline.points();
    let ts = orbit.polyline.params();
    let a = 1.5 * PI;
    let mut theta = pts[0].angle();
    let mut out = SpiralDeviation {
        max_radius_rel: 0.0,
        max_angle: 0.0,
        max_shape_rel: 0.0,
    };
    for i in 0..pts.len() {
        if pts[i] == Vec2::ZERO {
            return Err(Error::SingularWinding(i));
        }
        if i > 0 {
            theta += wrap_angle(pts[i].angle() - pts[i - 1].angle());
        }
        let r = pts[i].norm();
        let t = ts[i];
        let r_ref = 1.0 / (a + t);
        out.max_radius_rel = out.max_radius_rel.max((r - r_ref).abs() / r_ref);
        out.max_angle = out.max_angle.max((theta + t).abs());
        out.max_shape_rel = out.max_shape_rel.max((r * (a - theta) - 1.0).abs());
    }
    Ok(out)
}

/// Angular configuration used for the spiral counterexample.
pub fn spiral_flow_config(t_max: f64) -> FlowConfig {
    FlowConfig {
        method: Method::Rosenbrock,
        step: 1e-3,
        tolerance: 1e-8,
        t_max,
        stop_gradient_norm: 1e-12,
        stop_radius: 1e-10,
        limit: Some(Vec2::ZERO),
        parametrization: Parametrization::Angular { center: Vec2::ZERO },
        sample_spacing: None,
        max_steps: 50_000_000,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{MaxAffine, NormField, QuadraticField, SpiralField};

    #[test]
    fn isotropic_quadratic_all_methods() {
        let f = QuadraticField::diagonal(1.0, 1.0).unwrap();
        for method in [Method::Rk4, Method::Adaptive, Method::Rosenbrock] {
            let cfg = FlowConfig {
                method,
                step: 1e-3,
                tolerance: 1e-10,
                t_max: 1.0,
                ..FlowConfig::default()
            };
            let o = integrate_gradient(&f, Vec2::new(1.0, 0.0), &cfg).unwrap();
            assert_eq!(o.terminated_by, TerminatedBy::TimeLimit);
            assert_eq!(*o.polyline.params().last().unwrap(), 1.0);
            let end = o.polyline.last();
            let tol = if method == Method::Rosenbrock {
                1e-6
            } else {
                1e-9
            };
            assert!((end.x - (-1f64).exp()).abs() < tol, "{method:?}: {end}");
            assert!(end.y.abs() < 1e-15);
        }
    }

    #[test]
    fn samples_are_uniform() {
        let f = QuadraticField::diagonal(1.0, 4.0).unwrap();
        let cfg = FlowConfig {
            t_max: 2.0,
            sample_spacing: Some(0.25),
            ..FlowConfig::default()
        };
        let o = integrate_gradient(&f, Vec2::new(1.0, 1.0), &cfg).unwrap();
        let ts = o.polyline.params();
        assert_eq!(ts.len(), 9);
        for (k, &t) in ts.iter().enumerate() {
            assert!((t - 0.25 * k as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn stop_rules() {
        let f = QuadraticField::diagonal(1.0, 1.0).unwrap();
        let cfg = FlowConfig {
            t_max: 100.0,
            limit: Some(Vec2::ZERO),
            stop_radius: 1e-3,
            ..FlowConfig::default()
        };
        let o = integrate_gradient(&f, Vec2::new(1.0, 0.0), &cfg).unwrap();
        assert_eq!(o.terminated_by, TerminatedBy::ReachedLimit);
        assert!(o.polyline.last().norm() < 1e-3);
        let cfg = FlowConfig {
            t_max: 100.0,
            stop_gradient_norm: 1e-4,
            ..FlowConfig::default()
        };
        let o = integrate_gradient(&f, Vec2::new(1.0, 0.0), &cfg).unwrap();
        assert_eq!(o.terminated_by, TerminatedBy::GradientVanished);
        let o = integrate_gradient(&f, Vec2::ZERO, &cfg).unwrap();
        assert_eq!(o.polyline.len(), 1);
    }

    #[test]
    fn config_validation() {
        let f = QuadraticField::diagonal(1.0, 1.0).unwrap();
        let bad = FlowConfig {
            t_max: -1.0,
            ..FlowConfig::default()
        };
        assert!(matches!(
            integrate_gradient(&f, Vec2::ZERO, &bad),
            Err(Error::InvalidConfig(_))
        ));
    }

    struct NanField;
    impl ScalarField for NanField {
        fn name(&self) -> String {
            "nan".into()
        }
        fn value(&self, _: Vec2) -> f64 {
            0.0
        }
        fn gradient(&self, x: Vec2) -> Vec2 {
            if x.x < 0.5 {
                Vec2::new(f64::NAN, 0.0)
            } else {
                Vec2::new(1.0, 0.0)
            }
        }
        fn declared_class(&self) -> FieldClass {
            FieldClass::Neither
        }
    }

    #[test]
    fn nan_gradient_is_reported() {
        let cfg = FlowConfig {
            t_max: 2.0,
            ..FlowConfig::default()
        };
        assert!(matches!(
            integrate_gradient(&NanField, Vec2::new(1.0, 0.0), &cfg),
            Err(Error::FieldEvaluation(_))
        ));
    }

    #[test]
    fn winding_basics() {
        let circle = Polyline::from_points(
            (0..=64)
                .map(|k| Vec2::unit(2.0 * PI * k as f64 / 64.0))
                .collect(),
        )
        .unwrap();
        assert!((winding_number(&circle, Vec2::ZERO).unwrap() - 1.0).abs() < 1e-12);
        assert!((winding_number(&circle.reversed(), Vec2::ZERO).unwrap() + 1.0).abs() < 1e-12);
        let radial = Polyline::from_points(vec![Vec2::new(1.0, 1.0), Vec2::new(0.1, 0.1)]).unwrap();
        assert_eq!(winding_number(&radial, Vec2::ZERO).unwrap(), 0.0);
        let through = Polyline::from_points(vec![Vec2::new(1.0, 0.0), Vec2::ZERO]).unwrap();
        assert!(matches!(
            winding_number(&through, Vec2::ZERO),
            Err(Error::SingularWinding(1))
        ));
    }

    #[test]
    fn prox_of_half_norm_squared() {
        let f = QuadraticField::diagonal(1.0, 1.0).unwrap();
        let x = Vec2::new(0.7, -0.2);
        let y = proximal_step(&f, x, 0.3).unwrap();
        assert!(y.dist(x / 1.3) < 1e-11);
    }

    #[test]
    fn prox_of_norm_is_soft_threshold() {
        let y = proximal_step(&NormField, Vec2::new(1.0, 0.0), 0.1).unwrap();
        assert!(y.dist(Vec2::new(0.9, 0.0)) < 1e-11);
        let z = proximal_step(&NormField, Vec2::new(0.05, 0.0), 0.1).unwrap();
        assert_eq!(z, Vec2::ZERO);
        let o = integrate_proximal(&NormField, Vec2::new(1.0, 0.0), 0.1, 50).unwrap();
        assert_eq!(o.polyline.last(), Vec2::ZERO);
        assert_eq!(o.terminated_by, TerminatedBy::GradientVanished);
        assert!(o.polyline.len() <= 12);
    }

    #[test]
    fn prox_rejects_nonconvex() {
        assert!(integrate_proximal(&SpiralField, Vec2::new(0.2, 0.0), 0.1, 5).is_err());
    }

    #[test]
    fn prox_max_affine_ridge() {
        // f = |x| + y on the ridge: prox lands on the kink line x = 0.
        let f = MaxAffine::new(vec![
            (Vec2::new(1.0, 1.0), 0.0),
            (Vec2::new(-1.0, 1.0), 0.0),
        ])
        .unwrap();
        let y = proximal_step(&f, Vec2::new(0.05, 0.0), 0.1).unwrap();
        assert!(y.dist(Vec2::new(0.0, -0.1)) < 1e-10, "{y}");
    }

    #[test]
    fn single_sample_orbit_is_self_contracted() {
        let f = QuadraticField::diagonal(1.0, 1.0).unwrap();
        let cfg = FlowConfig::default();
        let o = integrate_gradient(&f, Vec2::ZERO, &cfg).unwrap();
        let r = orbit_self_contracted_report(&o, 1e-9).unwrap();
        assert!(r.verdict.is_self_contracted);
        assert!(r.bound.holds);
    }
}
