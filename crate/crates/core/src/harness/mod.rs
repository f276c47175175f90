//! Experiment driver: configuration, Monte-Carlo BER sweeps and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;

pub use config::{Detector, ExperimentConfig, SweepPoint};
pub use experiment::{run_experiment, BerReport, Execution};
