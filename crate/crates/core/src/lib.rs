//! Desk-scale power-grid security laboratory.
//!
//! The crate covers the full loop of a false-data-injection study on a DC
//! network model:
//!
//! - [`grid`]: network topology, meter placement and the measurement matrix H
//! - [`estimator`]: weighted-least-squares state estimation
//! - [`detection`]: chi-square and largest-normalized-residual bad-data tests
//! - [`attack`]: stealth attacks `a = H c`, random or targeted
//! - [`market`]: DC optimal power flow, LMPs and attacker arbitrage
//! - [`scenario`]: file formats, the scenario engine and Monte Carlo runs
//!
//! [`cases`] holds the built-in 5-bus system.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod attack;
pub mod cases;
pub mod detection;
pub mod error;
pub mod estimator;
pub mod grid;
mod linalg;
pub mod market;
pub mod scenario;

pub use error::{Error, Result};
