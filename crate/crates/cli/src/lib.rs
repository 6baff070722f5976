//! File formats and pipelines behind the `orthocode` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod scene;

pub use error::{CliError, Result};
