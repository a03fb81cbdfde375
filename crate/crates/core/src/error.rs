use thiserror::Error;

/// Errors raised by the engine.
///
/// The variants line up with the failure classes the CLI maps onto exit
/// codes, so keep them coarse.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller combined arguments that cannot work together
    /// (space mismatch, incompatible map kind, bad policy size, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// An argument is outside the domain of the operation (empty set, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A point cannot be put into canonical form.
    #[error("invalid point: {0}")]
    InvalidPoint(String),

    /// A dump or report on disk is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// A scene file is not well-formed structured text.
    #[error("parse error: {0}")]
    Parse(String),

    /// A scene file declares a format version this build does not know.
    #[error("unknown scene version {0}")]
    Version(i64),

    /// A scene file parses but breaks its invariants. One entry per field.
    #[error("invalid scene: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// An upstream artifact (reference dump, orbit dump) is missing.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
