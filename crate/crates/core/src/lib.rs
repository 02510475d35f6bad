#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Rate-adaptive streaming over a simulated 5G NR link: NR peak-rate
//! estimation from the reported MCS, a throttled quality-ladder controller,
//! a simulated gNB telemetry service, and a fluid-flow streaming model with
//! freeze metrics.

pub mod channel;
pub mod config;
pub mod controller;
pub mod error;
pub mod gnb;
pub mod metrics;
pub mod monitor;
pub mod nr_rate;
pub mod streaming;

pub use error::{Error, Result};
