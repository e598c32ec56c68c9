//! Spline and local-regression smoothers.
//!
//! Two families live here:
//!
//! * cubic B-spline bases on the observation grid ([`SplineBasis`],
//!   [`make_basis`], [`smooth_with_basis`], [`gcv_knot_count`]), which both
//!   estimators use to represent principal directions, and
//! * locally weighted regression ([`robust_loess_1d`], [`loess_2d`]) used for
//!   running location/scale curves and for completing partially observed
//!   covariance matrices.

mod basis;
mod loess;

pub use basis::{gcv_knot_count, make_basis, smooth_with_basis, SplineBasis, DEFAULT_KNOT_DIVISOR};
pub use loess::{loess_2d, robust_loess_1d, robust_loess_1d_at, LoessConfig};
