//! Command-line driver: builds problems from TOML configs, runs the solvers
//! and writes CSV traces, JSON reports and SVG plots.

pub mod build;
pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("condition check failed: {0}")]
    Condition(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numeric(_) | CliError::Io(_) => 2,
            CliError::Condition(_) => 3,
        }
    }
}
