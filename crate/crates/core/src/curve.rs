//! Discrete curves and the self-contractedness test.
//!
//! A curve is self-contracted when for every `i <= j <= l` the sample `p_j`
//! is no farther from `p_l` than `p_i` is. Fixing the endpoint `l`, this is
//! the statement that `i -> dist(p_i, p_l)` is nonincreasing on `0..=l`, which
//! is what [`check_self_contracted`] sweeps in `O(N^2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// The constant in the planar length bound `length <= (8 pi + 2) * gap`.
pub const LENGTH_BOUND_FACTOR: f64 = 8.0 * PI + 2.0;

/// Largest input accepted by [`check_self_contracted_bruteforce`].
pub const BRUTEFORCE_CAP: usize = 400;

/// Ordered planar samples with strictly increasing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolyline", into = "RawPolyline")]
pub struct Polyline {
    params: Vec<f64>,
    points: Vec<Vec2>,
}

#[derive(Serialize, Deserialize)]
struct RawPolyline {
    params: Vec<f64>,
    points: Vec<[f64; 2]>,
}

impl TryFrom<RawPolyline> for Polyline {
    type Error = Error;
    fn try_from(raw: RawPolyline) -> Result<Self> {
        Polyline::new(raw.params, raw.points.into_iter().map(Vec2::from).collect())
    }
}

impl From<Polyline> for RawPolyline {
    fn from(p: Polyline) -> Self {
        RawPolyline {
            params: p.params,
            points: p.points.into_iter().map(<[f64; 2]>::from).collect(),
        }
    }
}

impl Polyline {
    pub fn new(params: Vec<f64>, points: Vec<Vec2>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidPolyline("no samples".into()));
        }
        if params.len() != points.len() {
            return Err(Error::InvalidPolyline(format!(
                "{} params for {} points",
                params.len(),
                points.len()
            )));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidPolyline(format!(
                "non-finite point at index {i}"
            )));
        }
        if let Some(i) = params.iter().position(|t| !t.is_finite()) {
            return Err(Error::InvalidPolyline(format!(
                "non-finite parameter at index {i}"
            )));
        }
        if let Some(i) = params.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPolyline(format!(
                "parameters not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { params, points })
    }

    /// Samples indexed `0, 1, 2, ...`.
    pub fn from_points(points: Vec<Vec2>) -> Result<Self> {
        let params = (0..points.len()).map(|i| i as f64).collect();
        Self::new(params, points)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    /// Contiguous samples `range`, keeping their parameters.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Polyline> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::InvalidPolyline(format!("bad slice {range:?}")));
        }
        Ok(Polyline {
            params: self.params[range.clone()].to_vec(),
            points: self.points[range].to_vec(),
        })
    }

    /// The same samples traversed backwards (parameters are negated so they
    /// still increase).
    pub fn reversed(&self) -> Polyline {
        Polyline {
            params: self.params.iter().rev().map(|t| -t).collect(),
            points: self.points.iter().rev().copied().collect(),
        }
    }

    /// Inserts `k - 1` evenly spaced points inside every segment.
    pub fn refined(&self, k: usize) -> Polyline {
        let k = k.max(1);
        let mut params = Vec::with_capacity((self.len() - 1) * k + 1);
        let mut points = Vec::with_capacity(params.capacity());
        for i in 0..self.len() - 1 {
            for s in 0..k {
                let f = s as f64 / k as f64;
                params.push(self.params[i] + f * (self.params[i + 1] - self.params[i]));
                points.push(self.points[i].lerp(self.points[i + 1], f));
            }
        }
        params.push(*self.params.last().unwrap());
        points.push(self.last());
        Polyline { params, points }
    }

    /// Diagonal of the bounding box; within a factor `sqrt 2` of the diameter.
    pub fn extent(&self) -> f64 {
        let (mut lo, mut hi) = (self.points[0], self.points[0]);
        for p in &self.points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        lo.dist(hi)
    }

    /// `1e-9` times the curve extent.
    pub fn default_tolerance(&self) -> f64 {
        1e-9 * self.extent()
    }
}

/// Outcome of a self-contractedness check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScVerdict {
    pub is_self_contracted: bool,
    /// `[i, j, l]` with `i <= j <= l` and `dist(p_i, p_l) < dist(p_j, p_l) - tol`.
    pub witness: Option<[usize; 3]>,
    /// `min` over all ordered triples of `dist(p_i, p_l) - dist(p_j, p_l)`; never positive.
    pub slack: f64,
}

impl ScVerdict {
    fn from_slack(slack: f64, triple: [usize; 3], tolerance: f64) -> Self {
        let ok = slack >= -tolerance;
        ScVerdict {
            is_self_contracted: ok,
            witness: (!ok).then_some(triple),
            slack,
        }
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if tolerance >= 0.0 && tolerance.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidPolyline(format!(
            "tolerance must be >= 0, got {tolerance}"
        )))
    }
}

/// `O(N^2)` fixed-endpoint sweep.
pub fn check_self_contracted(curve: &Polyline, tolerance: f64) -> Result<ScVerdict> {
    check_tolerance(tolerance)?;
    let pts = curve.points();
    let mut slack = 0.0_f64;
    let mut triple = [0, 0, 0];
    for l in 0..pts.len() {
        let pl = pts[l];
        // Running minimum of dist(p_i, p_l) over i <= j.
        let mut best_i = 0;
        let mut best_d = f64::INFINITY;
        for (j, pj) in pts[..=l].iter().enumerate() {
            let dj = pj.dist(pl);
            if dj < best_d {
                best_d = dj;
                best_i = j;
            }
            let s = best_d - dj;
            if s < slack {
                slack = s;
                triple = [best_i, j, l];
            }
        }
    }
    Ok(ScVerdict::from_slack(slack, triple, tolerance))
}

/// Direct enumeration of all `i <= j <= l` triples. Test oracle for
/// [`check_self_contracted`]; refuses inputs longer than [`BRUTEFORCE_CAP`].
pub fn check_self_contracted_bruteforce(curve: &Polyline, tolerance: f64) -> Result<ScVerdict> {
    check_tolerance(tolerance)?;
    let pts = curve.points();
    if pts.len() > BRUTEFORCE_CAP {
        return Err(Error::OracleCap {
            len: pts.len(),
            cap: BRUTEFORCE_CAP,
        });
    }
    let mut slack = 0.0_f64;
    let mut triple = [0, 0, 0];
    for l in 0..pts.len() {
        for j in 0..=l {
            for i in 0..=j {
                let s = pts[i].dist(pts[l]) - pts[j].dist(pts[l]);
                if s < slack {
                    slack = s;
                    triple = [i, j, l];
                }
            }
        }
    }
    Ok(ScVerdict::from_slack(slack, triple, tolerance))
}

/// Sum of segment lengths.
pub fn length(curve: &Polyline) -> f64 {
    curve.points().windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Distance between the first and last samples.
pub fn endpoint_gap(curve: &Polyline) -> f64 {
    curve.first().dist(curve.last())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MainBound {
    pub length: f64,
    pub gap: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares the length with `(8 pi + 2) * endpoint_gap`, allowing the
/// curve's default tolerance.
pub fn check_main_bound(curve: &Polyline) -> MainBound {
    let length = length(curve);
    let gap = endpoint_gap(curve);
    let bound = LENGTH_BOUND_FACTOR * gap;
    MainBound {
        length,
        gap,
        bound,
        holds: length <= bound + curve.default_tolerance(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pl(pts: &[(f64, f64)]) -> Polyline {
        Polyline::from_points(pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn rejects_bad_params() {
        let pts = vec![Vec2::ZERO, Vec2::new(1.0, 0.0)];
        assert!(Polyline::new(vec![0.0, 0.0], pts.clone()).is_err());
        assert!(Polyline::new(vec![0.0], pts.clone()).is_err());
        assert!(Polyline::new(vec![0.0, 1.0], vec![Vec2::ZERO, Vec2::new(f64::NAN, 0.0)]).is_err());
        assert!(Polyline::new(vec![], vec![]).is_err());
        assert!(check_self_contracted(&pl(&[(0.0, 0.0)]), -1.0).is_err());
    }

    #[test]
    fn straight_segment_is_self_contracted() {
        let c = Polyline::from_points(
            (0..10)
                .map(|i| Vec2::new(i as f64 * 0.3, -(i as f64)))
                .collect(),
        )
        .unwrap();
        let v = check_self_contracted(&c, 0.0).unwrap();
        assert!(v.is_self_contracted);
        assert!(v.witness.is_none());
    }

    #[test]
    fn discontinuous_example_is_self_contracted() {
        // (t, 1) for t < 0, the origin at t = 0, (t, -1) for t > 0.
        let params = vec![-2.0, -1.0, 0.0, 1.0, 2.0];
        let points = vec![
            Vec2::new(-2.0, 1.0),
            Vec2::new(-1.0, 1.0),
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, -1.0),
            Vec2::new(2.0, -1.0),
        ];
        let c = Polyline::new(params, points).unwrap();
        assert!(check_self_contracted(&c, 0.0).unwrap().is_self_contracted);
    }

    #[test]
    fn three_quarter_circle_fails_with_valid_witness() {
        let n = 100;
        let c = Polyline::from_points(
            (0..n)
                .map(|k| Vec2::unit(1.5 * PI * k as f64 / (n - 1) as f64))
                .collect(),
        )
        .unwrap();
        let v = check_self_contracted(&c, 1e-12).unwrap();
        assert!(!v.is_self_contracted);
        let [i, j, l] = v.witness.unwrap();
        assert!(i <= j && j <= l);
        let p = c.points();
        assert!(p[i].dist(p[l]) < p[j].dist(p[l]) - 1e-12);
        assert!((p[i].dist(p[l]) - p[j].dist(p[l]) - v.slack).abs() < 1e-15);
        let b = check_self_contracted_bruteforce(&c, 1e-12).unwrap();
        assert_eq!(b.is_self_contracted, v.is_self_contracted);
        assert_eq!(b.slack, v.slack);
    }

    #[test]
    fn single_point_is_vacuous() {
        let c = pl(&[(1.0, 2.0)]);
        assert!(check_self_contracted(&c, 0.0).unwrap().is_self_contracted);
        assert!(
            check_self_contracted_bruteforce(&c, 0.0)
                .unwrap()
                .is_self_contracted
        );
        assert_eq!(length(&c), 0.0);
    }

    #[test]
    fn oracle_cap() {
        let c = Polyline::from_points(vec![Vec2::ZERO; BRUTEFORCE_CAP + 1]).unwrap();
        assert!(matches!(
            check_self_contracted_bruteforce(&c, 0.0),
            Err(Error::OracleCap { .. })
        ));
    }

    #[test]
    fn lengths_and_gaps() {
        let seg = pl(&[(0.0, 0.0), (3.0, 4.0)]);
        assert_eq!(length(&seg), 5.0);
        assert_eq!(endpoint_gap(&seg), 5.0);
        let sq = pl(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)]);
        assert_eq!(length(&sq), 4.0);
        assert_eq!(endpoint_gap(&sq), 0.0);
        let b = check_main_bound(&seg);
        assert!(b.holds);
        assert!((b.bound / b.gap - 27.132741228718345).abs() < 1e-12);
    }

    #[test]
    fn repeated_points_allowed() {
        let c = pl(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(check_self_contracted(&c, 0.0).unwrap().is_self_contracted);
        assert_eq!(length(&c), 2.0);
    }

    #[test]
    fn json_shape() {
        let c = pl(&[(0.0, 0.0), (1.0, 0.5)]);
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"{"params":[0.0,1.0],"points":[[0.0,0.0],[1.0,0.5]]}"#);
        let back: Polyline = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(
            serde_json::from_str::<Polyline>(r#"{"params":[1.0,0.0],"points":[[0,0],[1,1]]}"#)
                .is_err()
        );
        let v = ScVerdict {
            is_self_contracted: true,
            witness: None,
            slack: 0.0,
        };
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"is_self_contracted":true,"witness":null,"slack":0.0}"#
        );
    }
}
