//! IO layer for the CP-PLL engines: flat key-value run configs, CSV/JSON
//! trace export, PFD waveform files, and the subcommand implementations
//! behind the `cppll` binary.

pub mod config;
pub mod engines;
pub mod output;
pub mod run;

/// Process exit codes: `0` success, `2` configuration error, `3` a model
/// engine reported an error (Paemel termination, overload halt), `1`
/// internal failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Engine(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Engine(_) => 3,
            CliError::Internal(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Engine(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("json: {e}"))
    }
}
