//! Detects collective, crisis-driven behavior in ensembles of price series.
//!
//! The analyses are windowed pairwise Granger causality ([`granger`]) and
//! unembedded auto-recurrence quantification ([`rqa`]). [`market`] simulates
//! geometric Brownian motion with and without a common multiplicative driver,
//! which reproduces both signals. [`pipeline`] wires everything to CSV input
//! and plot-ready output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod granger;
pub mod market;
pub mod numstat;
pub mod pipeline;
pub mod rqa;
pub mod series;
pub mod stationarity;

pub use error::{Error, Result};
