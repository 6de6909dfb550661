use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("schema version mismatch in {what}: found {found}, expected {expected}")]
    SchemaVersion {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("parse error at line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid missing-pixel pattern: {0}")]
    InvalidPattern(String),

    #[error("value outside the radiometric model's image: {0}")]
    Domain(String),

    #[error("infeasible class count: K={k} but only {support} columns carry mass")]
    InfeasibleK { k: usize, support: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Coarse classification used by the CLI to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Format,
    Schema,
    Validation,
    Infeasible,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::MalformedHeader(_)
            | Error::TruncatedPayload { .. }
            | Error::DimensionMismatch(_)
            | Error::Parse { .. } => ErrorKind::Format,
            Error::SchemaVersion { .. } => ErrorKind::Schema,
            Error::Validation(_) | Error::InvalidPattern(_) | Error::Precondition(_) => {
                ErrorKind::Validation
            }
            Error::Domain(_)
            | Error::InfeasibleK { .. }
            | Error::Training(_)
            | Error::Config(_) => ErrorKind::Infeasible,
        }
    }
}
