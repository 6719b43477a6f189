//! Experiment driver for `graspolab-core`: flat key=value run configs, the
//! CSV file formats, and the `gen-data`, `compare-fitness`, `fit-position`,
//! `train-orient` and `eval-orient` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;

pub use config::{FitMethod, RunConfig};
pub use error::HarnessError;
pub use io::ResultTable;
