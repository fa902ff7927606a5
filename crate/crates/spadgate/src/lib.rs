//! Files, run configuration and the `spadgate` command line on top of
//! [`spadgate_core`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod stream;
pub mod tables;

pub use config::RunConfig;
pub use error::{CliError, Result};
