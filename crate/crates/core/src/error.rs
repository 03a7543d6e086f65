use std::path::PathBuf;

use crate::library::CoverId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("duplicate cover content {0}")]
    DuplicateCover(CoverId),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("a cover library needs at least 2 covers, got {0}")]
    LibraryTooSmall(usize),
    #[error("cover {0} is not in the library")]
    NotInLibrary(CoverId),
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("rank {rank} is outside [0, {bound})")]
    RankOutOfRange { rank: String, bound: String },
    #[error("invalid arrangement: {0}")]
    InvalidArrangement(String),
    #[error("payload has {got} bits, expected {expected}")]
    WrongPayloadLength { expected: u64, got: u64 },
    #[error("arrangement of rank {rank} lies outside the {l}-bit codec image")]
    UnreachableArrangement { rank: String, l: u64 },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("entropy source unavailable: {0}")]
    EntropyUnavailable(String),
    #[error("no samples")]
    EmptySamples,
    #[error("distributions are defined over different bins")]
    BinMismatch,
    #[error("oracle budget of {budget} {oracle} calls exhausted")]
    OracleBudgetExceeded { oracle: &'static str, budget: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DuplicateCover(_) => "DuplicateCover",
            Error::Io { .. } => "IoError",
            Error::LibraryTooSmall(_) => "LibraryTooSmall",
            Error::NotInLibrary(_) => "NotInLibrary",
            Error::Manifest(_) => "MalformedManifest",
            Error::InvalidParams(_) => "InvalidParams",
            Error::RankOutOfRange { .. } => "RankOutOfRange",
            Error::InvalidArrangement(_) => "InvalidArrangement",
            Error::WrongPayloadLength { .. } => "WrongPayloadLength",
            Error::UnreachableArrangement { .. } => "UnreachableArrangement",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::EntropyUnavailable(_) => "EntropyUnavailable",
            Error::EmptySamples => "EmptySamples",
            Error::BinMismatch => "BinMismatch",
            Error::OracleBudgetExceeded { .. } => "OracleBudgetExceeded",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Parse(_) => "ParseError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
