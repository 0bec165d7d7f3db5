use thiserror::Error;

/// Errors produced by the simulation and analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A value is outside its physical or mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid or missing.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numerical routine failed (singular system, non-convergence).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A feasibility problem has no solution.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Required data is missing from the input.
    #[error("incomplete data: {0}")]
    IncompleteData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
