//! Experiment tooling: metrics, the homogeneous baseline, parameter sweeps,
//! hypothesis tests and plots.

pub mod baseline;
pub mod metrics;
pub mod plot;
pub mod stats;
pub mod sweep;
pub mod table;
