//! Orchestration for the prompt-to-proxy pipeline: configuration, on-disk
//! layout and manifests, the procedural synthetic-scene sampler and the
//! command-line front end.

pub mod cli;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod syn;

use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Errors carry the pipeline stage that raised them.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{stage}: {message}")]
    Parse { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Runtime { stage: &'static str, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Parse { .. } => EXIT_PARSE,
            CliError::Runtime { .. } => EXIT_RUNTIME,
        }
    }
}

/// `map_err` adapter for input that failed to load or parse.
pub fn parse_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Parse {
        stage,
        message: e.to_string(),
    }
}

/// `map_err` adapter for failures after inputs were accepted.
pub fn runtime_err<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Runtime {
        stage,
        message: e.to_string(),
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
