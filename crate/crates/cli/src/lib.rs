//! Configuration, drivers and output writers for the `fplay` command.

pub mod compare;
pub mod config;
pub mod output;
pub mod plot;
pub mod runner;
pub mod selftest;

/// Exit status for any error.
pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Schema(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("output: {0}")]
    Output(String),
    #[error(transparent)]
    Core(#[from] fplay_core::Error),
}
