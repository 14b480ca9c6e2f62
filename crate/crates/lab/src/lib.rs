//! Experiment tooling around `cpbm-core`: click-log and LETOR file formats,
//! model snapshots, metric tables, and the grid runner behind the `cpbm` CLI.

pub mod config;
pub mod experiment;
pub mod letor;
pub mod logio;
pub mod snapshot;
pub mod tables;

pub use config::ExperimentConfig;
pub use experiment::{Cell, Lab, SweepReport};
