//! Experiment driver behind the `lerw3d` binary: manifests, configuration,
//! deterministic parallel runs and JSONL/CSV output.

pub mod acceptance;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod parallel;

pub use commands::{run, RunOutput};
pub use error::CliError;
pub use manifest::{ExperimentManifest, Format};
