//! Optimal distributed control for networked control systems whose
//! controllers see input delays shorter than one sampling period.
//!
//! The pipeline is: [`model::discretize`] a delayed continuous plant, build
//! a time-varying gain schedule offline with [`synthesis`], then roll the
//! closed loop forward and score it with [`simulate`]. [`schemes`] compares
//! the delay-aware design against two baselines.

pub mod cli;
pub mod error;
pub mod linalg;
pub mod model;
pub mod schemes;
pub mod simulate;
pub mod synthesis;

pub use error::{Error, Result};
