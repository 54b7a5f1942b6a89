//! Minimal SVG figures: polylines and circles in one uniformly scaled frame.
//!
//! Coordinates are printed with a fixed number of decimals, so a figure is a
//! pure function of its inputs.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use selfcontract_core::{Polyline, Vec2};

const WIDTH: f64 = 640.0;
const MARGIN: f64 = 20.0;
const PALETTE: [&str; 6] = [
    "#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400", "#555555",
];

#[derive(Debug, Clone, Default)]
pub struct Figure {
    pub curves: Vec<Polyline>,
    /// Drawn closed; used for convex bodies.
    pub outlines: Vec<Vec<Vec2>>,
    pub circles: Vec<(Vec2, f64)>,
}

impl Figure {
    pub fn is_empty(&self) -> bool {
        self.curves.is_empty() && self.outlines.is_empty() && self.circles.is_empty()
    }

    fn bounds(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut add = |p: Vec2, pad: f64| {
            lo = Vec2::new(lo.x.min(p.x - pad), lo.y.min(p.y - pad));
            hi = Vec2::new(hi.x.max(p.x + pad), hi.y.max(p.y + pad));
        };
        for c in &self.curves {
            c.points().iter().for_each(|&p| add(p, 0.0));
        }
        for o in &self.outlines {
            o.iter().for_each(|&p| add(p, 0.0));
        }
        for &(c, r) in &self.circles {
            add(c, r);
        }
        (lo, hi)
    }
}

/// Renders the figure. Fails on an empty figure or non-finite geometry.
pub fn render_svg(fig: &Figure) -> Result<String> {
    if fig.is_empty() {
        bail!("nothing to draw: figure has no curves, outlines or circles");
    }
    let (lo, hi) = fig.bounds();
    if !(lo.is_finite() && hi.is_finite()) {
        bail!("figure contains non-finite coordinates");
    }
    let span = (hi.x - lo.x).max(hi.y - lo.y).max(1e-300);
    let scale = (WIDTH - 2.0 * MARGIN) / span;
    let height = ((hi.y - lo.y) * scale + 2.0 * MARGIN).ceil();
    let map = |p: Vec2| ((p.x - lo.x) * scale + MARGIN, (hi.y - p.y) * scale + MARGIN);

    let mut s = String::new();
    writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    )?;
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#)?;
    for &(c, r) in &fig.circles {
        let (cx, cy) = map(c);
        writeln!(
            s,
            r##"<circle cx="{cx:.3}" cy="{cy:.3}" r="{:.3}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##,
            r * scale
        )?;
    }
    for (i, o) in fig.outlines.iter().enumerate() {
        writeln!(
            s,
            r#"<polygon points="{}" fill="none" stroke="{}" stroke-width="0.8"/>"#,
            points_attr(o.iter().copied(), map),
            PALETTE[(i + 1) % PALETTE.len()]
        )?;
    }
    for (i, c) in fig.curves.iter().enumerate() {
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            points_attr(c.points().iter().copied(), map),
            PALETTE[i % PALETTE.len()]
        )?;
    }
    writeln!(s, "</svg>")?;
    Ok(s)
}

fn points_attr(pts: impl Iterator<Item = Vec2>, map: impl Fn(Vec2) -> (f64, f64)) -> String {
    let mut out = String::new();
    for (k, p) in pts.enumerate() {
        let (x, y) = map(p);
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.3},{y:.3}");
    }
    out
}

pub fn emit_svg(fig: &Figure, path: &Path) -> Result<()> {
    let s = render_svg(fig)?;
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}
