//! Experiment orchestration: declarative TOML configs, checkpointed runs,
//! encoder reports, metrics CSVs and raster plots.

pub mod config;
pub mod plots;
pub mod report;
pub mod runner;
