//! CSV and JSON artifacts: polylines as `t,x,y`, orbits as `t,x,y,f`,
//! classified segments as `i,px,py,qx,qy,theta,kind,length`.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces every value bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::annulus::ClassifiedSegment;
use crate::curve::Polyline;
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Orbit, TerminatedBy};
use crate::geom::Vec2;

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn parse(field: Option<&str>, name: &str, row: usize) -> Result<f64> {
    let s = field.ok_or_else(|| Error::Parse(format!("row {row}: missing column {name}")))?;
    s.trim()
        .parse()
        .map_err(|e| Error::Parse(format!("row {row}: column {name}: {e}")))
}

pub fn write_polyline_csv<W: Write>(curve: &Polyline, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y"])?;
    for (t, p) in curve.params().iter().zip(curve.points()) {
        w.write_record(&[num(*t), num(p.x), num(p.y)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `t,x,y` rows; a trailing `f` column, if present, is ignored.
pub fn read_polyline_csv<R: Read>(input: R) -> Result<Polyline> {
    let mut r = csv::Reader::from_reader(input);
    let mut ts = Vec::new();
    let mut pts = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        ts.push(parse(rec.get(0), "t", i + 1)?);
        pts.push(Vec2::new(
            parse(rec.get(1), "x", i + 1)?,
            parse(rec.get(2), "y", i + 1)?,
        ));
    }
    Polyline::new(ts, pts)
}

pub fn write_orbit_csv<W: Write>(orbit: &Orbit, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x", "y", "f"])?;
    let c = &orbit.polyline;
    for ((t, p), f) in c.params().iter().zip(c.points()).zip(&orbit.f_values) {
        w.write_record(&[num(*t), num(p.x), num(p.y), num(*f)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_segments_csv<W: Write>(segments: &[ClassifiedSegment], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "px", "py", "qx", "qy", "theta", "kind", "length"])?;
    for (i, s) in segments.iter().enumerate() {
        w.write_record(&[
            i.to_string(),
            num(s.p.x),
            num(s.p.y),
            num(s.q.x),
            num(s.q.y),
            num(s.theta),
            s.kind.as_str().to_string(),
            num(s.length()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run metadata stored next to an orbit CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitMetadata {
    pub field: String,
    pub x0: Vec2,
    pub config: Option<FlowConfig>,
    pub terminated_by: TerminatedBy,
    pub samples: usize,
    pub steps: usize,
    pub seed: Option<u64>,
}

impl OrbitMetadata {
    pub fn new(
        field: &str,
        x0: Vec2,
        config: Option<FlowConfig>,
        orbit: &Orbit,
        seed: Option<u64>,
    ) -> Self {
        Self {
            field: field.to_string(),
            x0,
            config,
            terminated_by: orbit.terminated_by,
            samples: orbit.polyline.len(),
            steps: orbit.steps,
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_roundtrip_is_exact() {
        let c = Polyline::new(
            vec![0.0, 0.1, 1.0 / 3.0],
            vec![
                Vec2::new(1e-300, -0.0),
                Vec2::new(std::f64::consts::PI, 2.5e17),
                Vec2::new(-1.0 / 7.0, 0.3),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_polyline_csv(&c, &mut buf).unwrap();
        let back = read_polyline_csv(&buf[..]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn malformed_rows() {
        assert!(read_polyline_csv("t,x,y\n0,1\n".as_bytes()).is_err());
        assert!(read_polyline_csv("t,x,y\n0,1,a\n".as_bytes()).is_err());
        assert!(read_polyline_csv("t,x,y\n1,0,0\n0,1,1\n".as_bytes()).is_err());
    }
}
