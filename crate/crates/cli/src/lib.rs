//! Command-line front end: file formats and subcommands around
//! `gsmooth-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod io;

pub use args::{Cli, Command, Opts};
pub use commands::run;
pub use error::{CliError, Result};
