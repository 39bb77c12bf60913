//! Rare-event benchmark toolkit: stochastic reactor models, branched-growth
//! forward-flux sampling, committer-probability datasets, a suite of
//! regressors, and alarm-aware model ranking.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod alarm;
pub mod benchmark;
pub mod config;
pub mod dataset;
pub mod error;
pub mod ffs;
pub mod models;
pub mod pipeline;
pub mod process;
pub mod rng;
pub mod tuning;

pub use error::{Error, Result};
