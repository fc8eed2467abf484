//! Behavioral bot detection from swipe gestures and accelerometer traces.
// Validation uses `!(x > 0.0)` on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod classify;
pub mod error;
pub mod exec;
pub mod eval;
pub mod features;
pub mod gan;
pub mod nn;
pub mod surrogate;
pub mod synth;
pub mod trace;

pub use error::{Error, ErrorClass, Result};
pub use exec::Exec;
