//! Contextual position-based click model (CPBM) toolkit.
//!
//! This crate holds the numerical core of the laboratory: click simulation
//! under the contextual position-based model, the contextual EM-based
//! regression estimator together with the classical position-bias baselines,
//! a small sigmoid MLP with ADAM, a PBM-aware linear Thompson-sampling ranker
//! and the evaluation metrics. It is `no_std` and only needs `alloc`; file
//! formats, the experiment grid and the CLI live in `cpbm-lab`.
//!
//! Positions are 0-based throughout the API: position `0` is the top slot.
#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod click_model;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod ranker;

pub use error::{Error, Result};
