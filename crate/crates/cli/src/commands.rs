//! One function per subcommand. Each returns a JSON report and whether the
//! checked property failed; artifacts go to the output directory.

use std::f64::consts::PI;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use selfcontract_core::annulus::{
    annulus_lemmas, clip_to_annulus, eta_for_annulus, full_length_bound, overlapping_half_arcs,
    polygonal_approximation,
};
use selfcontract_core::curve::check_self_contracted_bruteforce;
use selfcontract_core::fields::check_convex_sampled;
use selfcontract_core::flow::{
    integrate_gradient, integrate_proximal, orbit_self_contracted_report, spiral_deviation,
    winding_angle, winding_number,
};
use selfcontract_core::foliation::{torralba_spiral_family, FamilySummary, TorralbaField};
use selfcontract_core::io::{
    read_polyline_csv, write_orbit_csv, write_polyline_csv, write_segments_csv, OrbitMetadata,
};
use selfcontract_core::{
    check_main_bound, check_self_contracted, endpoint_gap, length, AnnulusParams, Orbit, Polyline,
    Vec2,
};

use crate::config::{
    AnnulusPlan, BoundPlan, CheckScPlan, FlowPlan, FoliationPlan, Output, ProxPlan, SpiralPlan,
};
use crate::svg::{emit_svg, Figure};

/// Self-contractedness tolerance for orbits produced by the integrators.
pub const ORBIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Value,
    /// A checked property failed.
    pub violation: bool,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Self {
            report,
            violation: false,
        }
    }
}

fn read_curve(path: &Path) -> Result<Polyline> {
    let f = File::open(path).with_context(|| format!("opening input {}", path.display()))?;
    read_polyline_csv(f).with_context(|| format!("reading polyline from {}", path.display()))
}

fn artifact(output: &Output, name: &str) -> Result<Option<PathBuf>> {
    let Some(dir) = &output.out_dir else {
        return Ok(None);
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(Some(dir.join(name)))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn draw(output: &Output, fig: impl FnOnce() -> Figure) -> Result<()> {
    if let Some(path) = &output.svg {
        emit_svg(&fig(), path)?;
    }
    Ok(())
}

fn save_orbit(output: &Output, orbit: &Orbit, meta: &OrbitMetadata) -> Result<()> {
    if let Some(p) = artifact(output, "orbit.csv")? {
        write_orbit_csv(orbit, create(&p)?)?;
    }
    if let Some(p) = artifact(output, "orbit.json")? {
        write_json(&p, &serde_json::to_value(meta)?)?;
    }
    Ok(())
}

/// Angle increments smaller than this are floating-point noise of `atan2`
/// (a few ulps of pi), not turning.
pub const ANGLE_ROUNDING: f64 = 1e-12;

/// True when all angular increments about `center` share one sign, up to
/// `ANGLE_ROUNDING`.
pub fn winds_monotonically(curve: &Polyline, center: Vec2) -> bool {
    let inc: Vec<f64> = curve
        .points()
        .windows(2)
        .map(|w| selfcontract_core::geom::signed_angle(w[0] - center, w[1] - center))
        .collect();
    inc.iter().all(|&d| d <= ANGLE_ROUNDING) || inc.iter().all(|&d| d >= -ANGLE_ROUNDING)
}

pub fn check_sc(plan: &CheckScPlan, output: &Output) -> Result<Outcome> {
    let curve = read_curve(&plan.input)?;
    let tolerance = plan.tolerance.unwrap_or_else(|| curve.default_tolerance());
    let verdict = check_self_contracted(&curve, tolerance)?;
    let mut report = json!({
        "command": "check-sc",
        "input": plan.input,
        "points": curve.len(),
        "tolerance": tolerance,
        "verdict": verdict,
    });
    if plan.bruteforce {
        let oracle = check_self_contracted_bruteforce(&curve, tolerance)?;
        report["bruteforce_agrees"] =
            json!(oracle.is_self_contracted == verdict.is_self_contracted);
        report["bruteforce"] = serde_json::to_value(&oracle)?;
    }
    if let Some(p) = artifact(output, "verdict.json")? {
        write_json(&p, &report)?;
    }
    draw(output, || Figure {
        curves: vec![curve.clone()],
        ..Figure::default()
    })?;
    Ok(Outcome {
        violation: !verdict.is_self_contracted,
        report,
    })
}

pub fn bound(plan: &BoundPlan, output: &Output) -> Result<Outcome> {
    let curve = read_curve(&plan.input)?;
    let center = plan.center.unwrap_or_else(|| curve.last());
    let main = check_main_bound(&curve);
    let verdict = check_self_contracted(&curve, curve.default_tolerance())?;
    let tol = plan.tolerance.unwrap_or(1e-9 * curve.extent().max(1.0));
    let full = full_length_bound(&curve, plan.lambda, center, tol)?;
    let report = json!({
        "command": "bound",
        "input": plan.input,
        "points": curve.len(),
        "center": center,
        "self_contracted": verdict.is_self_contracted,
        "main_bound": main,
        "annuli": full.annuli.len(),
        "full_bound": {
            "initial_radius": full.initial_radius,
            "total_by_annuli": full.total_by_annuli,
            "width_sum": full.width_sum,
            "residual_length": full.residual_length,
            "bound": full.bound,
            "holds": full.holds,
        },
    });
    if let Some(p) = artifact(output, "bound.json")? {
        let mut detailed = report.clone();
        detailed["full_bound"]["annuli"] = serde_json::to_value(&full.annuli)?;
        write_json(&p, &detailed)?;
    }
    draw(output, || Figure {
        curves: vec![curve.clone()],
        circles: full
            .annuli
            .iter()
            .take(12)
            .map(|a| (center, a.outer))
            .collect(),
        ..Figure::default()
    })?;
    Ok(Outcome {
        violation: !(main.holds && full.holds),
        report,
    })
}

pub fn annulus(plan: &AnnulusPlan, output: &Output) -> Result<Outcome> {
    let curve = read_curve(&plan.input)?;
    let center = plan.center.unwrap_or_else(|| curve.last());
    let outer = plan
        .outer_radius
        .unwrap_or_else(|| curve.first().dist(center));
    let params = AnnulusParams::with_center(plan.alpha, plan.lambda, outer, center)?;
    let verdict = check_self_contracted(&curve, curve.default_tolerance())?;
    let lemmas = annulus_lemmas(&curve, &params, plan.eta_density)?;

    // Segments of the outermost annulus, for inspection.
    let eta = eta_for_annulus(&params, plan.eta_density);
    let mut segments = Vec::new();
    for piece in clip_to_annulus(&curve, center, params.inner_radius(), outer) {
        segments.extend(polygonal_approximation(&piece, &params, eta)?);
    }
    let overlaps = overlapping_half_arcs(&segments, &params, 1e-12 * outer)?;
    let all_hold = lemmas.iter().all(|l| l.holds());
    let report = json!({
        "command": "annulus",
        "input": plan.input,
        "params": params,
        "eta": eta,
        "self_contracted": verdict.is_self_contracted,
        "annuli": lemmas,
        "outer_segments": segments.len(),
        "outer_overlapping_half_arcs": overlaps.len(),
        "all_hold": all_hold,
    });
    if let Some(p) = artifact(output, "segments.csv")? {
        write_segments_csv(&segments, create(&p)?)?;
    }
    if let Some(p) = artifact(output, "annulus.json")? {
        write_json(&p, &report)?;
    }
    draw(output, || Figure {
        curves: vec![curve.clone()],
        circles: lemmas
            .iter()
            .take(12)
            .map(|l| (center, l.outer))
            .chain(lemmas.first().map(|l| (center, l.inner)))
            .collect(),
        ..Figure::default()
    })?;
    Ok(Outcome {
        violation: !all_hold,
        report,
    })
}

fn orbit_summary(orbit: &Orbit, center: Vec2) -> Result<Value> {
    let rep = orbit_self_contracted_report(orbit, ORBIT_TOLERANCE)?;
    Ok(json!({
        "terminated_by": orbit.terminated_by,
        "samples": orbit.polyline.len(),
        "steps": orbit.steps,
        "final_point": orbit.polyline.last(),
        "final_value": orbit.f_values.last(),
        "length": length(&orbit.polyline),
        "endpoint_gap": endpoint_gap(&orbit.polyline),
        "winding_turns": winding_number(&orbit.polyline, center).ok(),
        "self_contracted": rep.verdict,
        "main_bound": rep.bound,
    }))
}

pub fn flow(plan: &FlowPlan, output: &Output) -> Result<Outcome> {
    let orbit = integrate_gradient(plan.field.as_ref(), plan.x0, &plan.config)?;
    let report = json!({
        "command": "flow",
        "field": plan.spec,
        "x0": plan.x0,
        "config": plan.config,
        "winding_center": plan.center,
        "orbit": orbit_summary(&orbit, plan.center)?,
    });
    let meta = OrbitMetadata::new(&plan.spec, plan.x0, Some(plan.config), &orbit, plan.seed);
    save_orbit(output, &orbit, &meta)?;
    draw(output, || Figure {
        curves: vec![orbit.polyline.clone()],
        ..Figure::default()
    })?;
    Ok(Outcome::ok(report))
}

pub fn prox(plan: &ProxPlan, output: &Output) -> Result<Outcome> {
    let orbit = integrate_proximal(plan.field.as_ref(), plan.x0, plan.step, plan.iterations)?;
    let center = orbit.polyline.last();
    let report = json!({
        "command": "prox",
        "field": plan.spec,
        "x0": plan.x0,
        "step": plan.step,
        "iterations": plan.iterations,
        "orbit": orbit_summary(&orbit, center)?,
    });
    let meta = OrbitMetadata::new(&plan.spec, plan.x0, None, &orbit, None);
    save_orbit(output, &orbit, &meta)?;
    draw(output, || Figure {
        curves: vec![orbit.polyline.clone()],
        ..Figure::default()
    })?;
    Ok(Outcome::ok(report))
}

/// Truncation times `10, 100, 1000, ...` up to `t_max`, then `t_max`.
fn decades(t_max: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (1..)
        .map(|k| 10f64.powi(k))
        .take_while(|&t| t < t_max)
        .collect();
    ts.push(t_max);
    ts
}

pub fn spiral(plan: &SpiralPlan, output: &Output) -> Result<Outcome> {
    let field = selfcontract_core::fields::SpiralField;
    let orbit = integrate_gradient(&field, plan.x0, &plan.config)?;
    let mut rows = Vec::new();
    for t in decades(plan.config.t_max) {
        let tr = orbit.truncated(t)?;
        rows.push(json!({
            "t": t,
            "length": length(&tr.polyline),
            "winding_turns": winding_number(&tr.polyline, Vec2::ZERO)?,
        }));
    }
    let verdict = check_self_contracted(&orbit.polyline, ORBIT_TOLERANCE)?;
    let report = json!({
        "command": "spiral",
        "x0": plan.x0,
        "config": plan.config,
        "terminated_by": orbit.terminated_by,
        "samples": orbit.polyline.len(),
        "steps": orbit.steps,
        "truncations": rows,
        "reference_deviation": spiral_deviation(&orbit)?,
        "self_contracted": verdict,
    });
    let meta = OrbitMetadata::new("spiral", plan.x0, Some(plan.config), &orbit, None);
    save_orbit(output, &orbit, &meta)?;
    draw(output, || {
        // The tail is invisible at figure scale; stop at t = 100.
        let shown = orbit
            .truncated(100.0)
            .map(|o| o.polyline)
            .unwrap_or(orbit.polyline.clone());
        Figure {
            curves: vec![shown],
            circles: vec![(Vec2::ZERO, plan.x0.norm())],
            ..Figure::default()
        }
    })?;
    Ok(Outcome::ok(report))
}

pub fn foliation(plan: &FoliationPlan, output: &Output, seed: u64) -> Result<Outcome> {
    let c = torralba_spiral_family(plan.ellipse, plan.periods, plan.grid, plan.level_fraction)?;
    let fam = &c.family;
    let x0 = Vec2::new(0.0, fam.bodies[0].support_at(PI / 2.0));
    let traj = selfcontract_core::foliation::orthogonal_trajectory(fam, x0, plan.level_fraction)?;
    let field = TorralbaField::new(fam.clone());
    let scale = fam.levels[0] - fam.last_level();
    let convex = check_convex_sampled(&field, 10_000, 1.0, 1e-8 * scale, seed);
    let verdict = check_self_contracted(&traj.polyline, ORBIT_TOLERANCE)?;
    let turn = winding_angle(&traj.polyline, Vec2::ZERO)?;
    let report = json!({
        "command": "foliation",
        "ellipse": { "a": plan.ellipse.a, "b": plan.ellipse.b, "rotation": plan.ellipse.rotation },
        "periods": plan.periods,
        "grid": plan.grid,
        "theta_hat": c.theta_hat,
        "k": c.k,
        "k_max": c.ks.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "bodies": fam.len(),
        "last_level": fam.last_level(),
        "convexity_sample": convex,
        "trajectory": {
            "samples": traj.polyline.len(),
            "turn": turn,
            "winds_monotonically": winds_monotonically(&traj.polyline, Vec2::ZERO),
            "self_contracted": verdict,
            "main_bound": check_main_bound(&traj.polyline),
        },
    });
    if let Some(dir) = &output.out_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, b) in fam.bodies.iter().enumerate() {
            b.write_csv(create(&dir.join(format!("body_{k:03}.csv")))?)?;
        }
        write_json(
            &dir.join("family.json"),
            &serde_json::to_value(FamilySummary::from(fam))?,
        )?;
        write_polyline_csv(&traj.polyline, create(&dir.join("trajectory.csv"))?)?;
        write_json(&dir.join("foliation.json"), &report)?;
    }
    draw(output, || Figure {
        curves: vec![traj.polyline.clone()],
        outlines: fam.bodies.iter().map(|b| b.polygon()).collect(),
        circles: Vec::new(),
    })?;
    Ok(Outcome::ok(report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decade_truncations() {
        assert_eq!(decades(1000.0), vec![10.0, 100.0, 1000.0]);
        assert_eq!(decades(50.0), vec![10.0, 50.0]);
        assert_eq!(decades(5.0), vec![5.0]);
    }

    #[test]
    fn monotone_winding() {
        let cw =
            Polyline::from_points((0..20).map(|k| Vec2::unit(-0.1 * k as f64)).collect()).unwrap();
        assert!(winds_monotonically(&cw, Vec2::ZERO));
        let zig =
            Polyline::from_points(vec![Vec2::unit(0.0), Vec2::unit(0.2), Vec2::unit(0.1)]).unwrap();
        assert!(!winds_monotonically(&zig, Vec2::ZERO));
    }
}
