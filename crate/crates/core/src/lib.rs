//! Certified global identification of Hill/ARX Wiener models.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bnb;
pub mod bound;
pub mod error;
pub mod identify;
pub mod interval;
pub mod numerics;
pub mod pkpd;
pub mod region;
pub mod synthetic;
pub mod verify;
pub mod wiener;

pub use error::{Error, InvertibilityError, Result};
pub use region::ParamBox;
