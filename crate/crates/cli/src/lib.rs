//! Experiment orchestration for the fluctuation toolkit: configuration
//! parsing, pipeline wiring, CSV/JSON emission and reproducibility
//! manifests.

pub mod config;
pub mod presets;
pub mod runner;
