//! Numerics for differential equations driven by Gaussian rough paths.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod covariance;
pub mod density;
pub mod error;
pub mod gaussian_path;
pub mod grid;
pub mod linalg;
pub mod malliavin;
pub mod pvar;
pub mod rde;
pub mod rng;
pub mod rough_lift;

pub use covariance::{CovKernel, Gram, KernelSpec};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use gaussian_path::{CMElement, PathEnsemble, PathSampler};
pub use rough_lift::RoughPath2;
