//! Experiment harness around `sparsetrain-core`: TOML configs, binary
//! checkpoints, JSON reports, CSV comparison tables and the command line.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod verify;

pub use self::error::{HarnessError, Result};
