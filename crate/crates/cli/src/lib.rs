//! Command-line driver: parses flags and config files into a [`RunSpec`]
//! and dispatches to the training and experiment runners.

mod args;
mod run;
mod spec;

use std::ffi::OsString;

use thiserror::Error;

pub use args::parse_cli;
pub use run::{execute, RESOLVED_CONFIG, SENTINEL};
pub use spec::{Command, DataSource, RunSpec, SplitChoice, RUN_KEYS};

#[derive(Debug, Error)]
pub enum CliError {
    /// Help or version text requested.
    #[error("{0}")]
    Help(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Help(_) => 0,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = parse_cli(argv).and_then(|spec| execute(&spec));
    match result {
        Ok(()) => 0,
        Err(CliError::Help(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
