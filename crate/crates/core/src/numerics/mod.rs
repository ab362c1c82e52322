//! Dense linear-algebra and scalar search kernels.
//!
//! Everything here is a pure function of its inputs.

mod cholesky;
mod expm;
mod lstsq;
mod matrix;
mod maximize;

pub use cholesky::{cholesky_solve, factor_in_place, solve_in_place, Cholesky, NotPositiveDefinite, PIVOT_TOL};
pub use expm::{expm, EXPM_MAX_DIM};
pub use lstsq::{least_squares, least_squares_detailed, LstsqSolution, Qr};
pub use matrix::{dot, norm2, Matrix};
pub use maximize::{maximize_scalar, ScalarSearch};
