//! Command implementations behind the `qbarrier` binary, kept in a library
//! so integration tests can drive config parsing and the emitters directly.

pub mod commands;
pub mod config;
pub mod output;

use qbarrier_core::CoreError;

#[derive(Debug)]
pub enum CliError {
    Io(std::io::Error),
    Config(String),
    Numeric(String),
    NonConvergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::NonConvergence(_) => 4,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Io(e) => format!("i/o error: {e}"),
            CliError::Config(m) => format!("config error: {m}"),
            CliError::Numeric(m) => format!("numeric failure: {m}"),
            CliError::NonConvergence(m) => format!("did not converge: {m}"),
        }
    }
}

/// Exit-code class of a core error, decided by the innermost cause.
pub fn core_error(e: CoreError) -> CliError {
    fn innermost(e: &CoreError) -> &CoreError {
        match e {
            CoreError::Evaluation { source, .. } => innermost(source),
            other => other,
        }
    }
    let class = innermost(&e);
    match class {
        CoreError::InvalidSpec(_) => CliError::Config(e.to_string()),
        CoreError::AdaptiveExhausted { .. } => CliError::NonConvergence(e.to_string()),
        _ => CliError::Numeric(e.to_string()),
    }
}
