//! Convexification-based reconstruction of the dielectric constant of buried
//! objects from backscatter data at multiple frequencies: a synthetic data
//! simulator, the tail and main Carleman-weighted functionals, a
//! gradient-projection minimizer, coefficient recovery and property suites.

// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod carleman;
pub mod commands;
pub mod config;
pub mod convexifier;
pub mod data_prep;
pub mod error;
pub mod forward_sim;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod reconstructor;
pub mod tail_solver;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Field, GridSpec, C64};
