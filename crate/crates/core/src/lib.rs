//! AFDM channel estimation with sparse Bayesian learning.

// `!(x > t)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod dictionary;
pub mod distributed;
pub mod error;
pub mod flops;
pub mod frame;
pub mod grid_update;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod modem;
pub mod sbl;

pub use error::{Error, Result};
