use thiserror::Error;

/// Crate-wide error type.
///
/// The variants follow the failure taxonomy used throughout the crate:
/// configuration problems are caller mistakes detectable before any
/// computation runs, domain/range errors are bad arguments to a single
/// operation, and invariant faults are internal bugs surfaced loudly.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent or out-of-range configuration (model, scheme, experiment).
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Value outside the admissible numeric range.
    #[error("range error: {0}")]
    Range(String),

    /// Operation requires a drift form the given model does not provide.
    #[error("unsupported drift: {0}")]
    UnsupportedDrift(String),

    /// An internal invariant failed; indicates a bug, not user error.
    #[error("internal invariant fault: {0}")]
    Invariant(String),

    /// Command line or experiment invocation misuse.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for caller mistakes, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            _ => 1,
        }
    }
}
