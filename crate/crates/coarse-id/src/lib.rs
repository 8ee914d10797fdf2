//! Experiment driver, file formats and plots around `coarse_id_core`.

pub mod config;
pub mod experiment;
pub mod io;
pub mod report;
