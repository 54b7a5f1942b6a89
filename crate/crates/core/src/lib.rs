//! Self-contracted planar curves: verification, the annulus length estimate,
//! gradient and proximal orbits of test functions, and a convex function
//! built from a foliation of nested convex bodies whose orbits spiral.
//!
//! The modules, bottom up:
//!
//! - [`geom`]: vectors and small geometric predicates.
//! - [`curve`]: polylines, the self-contractedness check, the length bound.
//! - [`annulus`]: segment classification, the projection onto the inner
//!   circle, per-annulus length estimates.
//! - [`fields`]: scalar test functions and sampled class checks.
//! - [`flow`]: integrators, proximal iterates, winding numbers.
//! - [`foliation`]: support-function bodies and the spiral family.
//! - [`io`]: CSV/JSON artifacts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annulus;
pub mod curve;
pub mod error;
pub mod fields;
pub mod flow;
pub mod foliation;
pub mod geom;
pub mod io;

pub use annulus::{AnnulusParams, ClassifiedSegment, SegmentKind};
pub use curve::{
    check_main_bound, check_self_contracted, endpoint_gap, length, Polyline, ScVerdict,
};
pub use error::{Error, Result};
pub use fields::{FieldClass, ScalarField};
pub use flow::{FlowConfig, Orbit, TerminatedBy};
pub use foliation::{ConvexBody, FoliationFamily};
pub use geom::Vec2;
