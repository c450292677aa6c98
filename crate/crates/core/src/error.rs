use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum AqlError {
    /// Invalid configuration (bad shapes, inconsistent settings, unparseable config files).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation's contract (non-scalar loss, unnormalized
    /// distribution, mismatched lengths, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Non-finite values showed up where they must not.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Exhaustive enumeration was requested on a space that does not permit it.
    #[error("enumeration error: {0}")]
    Enumeration(String),

    /// Checkpoint files that are truncated, corrupt, or of the wrong version.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AqlError>;
