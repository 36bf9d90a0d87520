//! Pointwise bounds for positive solutions of `-u'' + V u^q = f` on an
//! interval, expressed through Green potentials, together with the
//! fixed-point and finite-difference solvers used to check them.

// `!(x > 0.0)` is used on purpose so that NaN fails the test
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bvp;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod fixedpoint;
pub mod green;
pub mod layer;
mod linalg;
pub mod phi;
pub mod scenarios;

pub use domain::{make_grid, sample, Grid, GridFn, Interval};
pub use error::{Error, Result};
pub use green::{kernel_eval, potential, potential_improper, Kernel, PotentialResult};
pub use phi::PhiFamily;
