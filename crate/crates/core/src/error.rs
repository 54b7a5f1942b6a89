use thiserror::Error;

use crate::flow::Orbit;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid polyline: {0}")]
    InvalidPolyline(String),

    #[error("brute-force oracle refuses {len} points (cap {cap})")]
    OracleCap { len: usize, cap: usize },

    #[error("degenerate segment: endpoints coincide at {0}")]
    DegenerateSegment(crate::Vec2),

    #[error("segment midpoint coincides with the annulus center")]
    SingularMidpoint,

    #[error("invalid annulus parameters: {0}")]
    InvalidAnnulus(String),

    #[error("point {point} at radius {radius} lies outside the annulus [{inner}, {outer}]")]
    OutOfAnnulus {
        point: crate::Vec2,
        radius: f64,
        inner: f64,
        outer: f64,
    },

    #[error("segment estimate undefined: |theta| = pi/2")]
    UndefinedEstimate,

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("radius increases along the curve at sample {index} ({from} -> {to})")]
    NonMonotoneRadius { index: usize, from: f64, to: f64 },

    #[error("refinement did not reach segment length {eta} within depth {depth}")]
    RefinementDepth { eta: f64, depth: u32 },

    #[error("curve does not converge to the center: final distance {distance} > {tolerance}")]
    NotConverging { distance: f64, tolerance: f64 },

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("field evaluation produced a non-finite value at {0}")]
    FieldEvaluation(crate::Vec2),

    #[error("step size underflow at t = {t} (h = {h})")]
    Stiffness { t: f64, h: f64, partial: Box<Orbit> },

    #[error("proximal subproblem did not converge (residual {residual})")]
    ProximalSolve { residual: f64 },

    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),

    #[error("sample {0} coincides with the winding center")]
    SingularWinding(usize),

    #[error("direction grids differ ({0} vs {1})")]
    GridMismatch(usize, usize),

    #[error("nesting violated at direction index {index}: denominator {denominator}")]
    NestingViolation { index: usize, denominator: f64 },

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("point {0} lies outside the outermost body")]
    Domain(crate::Vec2),

    #[error("no supporting direction at {0}: point is interior to its level")]
    Position(crate::Vec2),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
