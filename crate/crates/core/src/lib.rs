//! Simulation library for a massive MIMO base station built from a small
//! active array that illuminates a large reconfigurable intelligent surface
//! (RIS) placed a few wavelengths in front of it.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod optimizer;
pub mod performance;
pub mod phase;

pub use error::{Error, Result};
