use thiserror::Error;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid fingerprint: {0}")]
    InvalidFingerprint(String),

    #[error("invalid radio map: {0}")]
    InvalidMap(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("regression needs at least one candidate sample")]
    EmptySamples,

    #[error("no common AP with any candidate")]
    NoCommonAp,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty query set")]
    EmptyQueries,

    #[error("unsupported format_version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable short tag used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidFingerprint(_) => "invalid_fingerprint",
            Error::InvalidMap(_) => "invalid_map",
            Error::Domain(_) => "domain",
            Error::EmptySamples => "empty_samples",
            Error::NoCommonAp => "no_common_ap",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::EmptyQueries => "empty_queries",
            Error::FormatVersion { .. } => "format_version",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
