//! Pseudo-spectral solvers for the scaled compressible rotating
//! Navier–Stokes system on a slab, its two singular limits, and the
//! diagnostics used to compare them.

// Negated comparisons are the NaN-rejecting form used in input validation,
// and index loops mirror the component formulas they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acoustic;
pub mod compressible;
pub mod commands;
pub mod config;
pub mod eos;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod planar;
pub mod presets;
pub mod radial;
pub mod spectral;

pub use error::{Error, Result};
