//! Chain-of-thought length forecasting from hidden-state "fuel" readings.
//!
//! A tiny network reads a fuel level in `(0, 1)` from the last eight hidden
//! states; a fixed-intercept line through all readings so far predicts the
//! total length at its zero crossing. The crate also carries the testbeds
//! that exercise the forecast: synthetic traces, rMAE evaluation, KV-cache
//! allocation simulation, and gradient-based length modulation.

mod binio;
pub mod error;
pub mod eval;
pub mod gauge;
pub mod kv_alloc;
pub mod modulation;
pub mod nn;
pub mod registry;
pub mod rng;
pub mod traces;

pub use binio::write_atomic;
pub use error::{Error, Result};
