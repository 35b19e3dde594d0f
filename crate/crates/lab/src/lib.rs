//! Experiments on random walk loop soups: decoupling defects, local
//! uniqueness, vacancy curves, estimate pooling, spec files and the CLI.

pub mod cli;
pub mod clusters;
pub mod coupling;
pub mod decouple;
pub mod functions;
pub mod lu;
pub mod parallel;
pub mod spec;
pub mod vacancy;

pub use loopsoup::stats::{merge_estimates, EstimateRecord};
