//! Transport equations with functionally causal coefficients, solved by the
//! method of characteristics on a transformed time clock.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod inpainting;
pub mod io;
pub mod linear;
pub mod presets;
pub mod quasilinear;
pub mod verification;

pub use error::{Error, Result};
pub use geometry::{BBox, Domain, Point2, Vec2};
pub use grid::{CellKind, DomainGrid, Grid, ScalarGridField};
