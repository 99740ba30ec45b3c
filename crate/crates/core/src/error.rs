//! Error taxonomy shared across the workspace.
//!
//! Every error maps to one of the CLI exit codes: configuration problems
//! exit 2, data/validation problems exit 3, transport exhaustion exits 4,
//! and internal invariant violations exit 5.

use thiserror::Error;

/// Top-level error for all library operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: backend registry, templates, sandbox command.
    #[error("{0}")]
    Config(String),

    /// Bad input data: corpus files, fixtures, run directories, transcripts.
    #[error("{0}")]
    Data(String),

    /// An HTTP backend exhausted its retry budget.
    #[error("backend '{backend_id}' exhausted {attempts} attempts: {last_error}")]
    TransportExhausted {
        backend_id: String,
        attempts: u32,
        last_error: String,
    },

    /// A replay backend had no recorded completion for a request key.
    #[error("replay fixture miss for key {key} (backend '{backend_id}')")]
    FixtureMiss { backend_id: String, key: String },

    /// Caller misuse of a library operation (bad arguments, empty input).
    #[error("{0}")]
    Usage(String),

    /// A broken internal invariant; always a bug.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Short machine-parseable category, printed as `error[<category>]: ...`.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::TransportExhausted { .. } => "transport",
            Error::FixtureMiss { .. } => "fixture-miss",
            Error::Usage(_) => "usage",
            Error::Internal(_) => "internal",
            Error::Io { .. } => "io",
        }
    }

    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Data(_) | Error::FixtureMiss { .. } | Error::Io { .. } => 3,
            Error::TransportExhausted { .. } => 4,
            Error::Internal(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
