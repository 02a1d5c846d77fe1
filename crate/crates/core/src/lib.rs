//! Mittag-Leffler moments for the space-homogeneous Boltzmann equation with
//! hard potentials and non-cutoff angular kernels.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod analytic;
pub mod combinatoric_bounds;
pub mod dsmc;
pub mod error;
pub mod io;
pub mod kernels;
pub mod moment_bounds;
pub mod partial_sums;
pub mod povzner;
pub mod quad;
pub mod rng;
pub mod specfun;

pub use error::{Error, Result};
