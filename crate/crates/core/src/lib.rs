//! Variational grouped horseshoe regression with penalized credible region
//! variable selection.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod basis;
pub mod bench;
pub mod cavi;
pub mod error;
pub mod group_lasso;
pub mod grouped_model;
pub mod linalg;
pub mod metrics;
pub mod pencr;
pub mod predict;
pub mod sim;

pub use error::{Error, Result};
