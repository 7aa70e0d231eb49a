//! Batch command line for readout characterization: run configuration,
//! report and trace files, the simulated chip scenario and an optional
//! line-oriented wire backend.

pub mod chip;
pub mod config;
pub mod report;
pub mod run;
pub mod trace;
#[cfg(feature = "wire")]
pub mod wire;
