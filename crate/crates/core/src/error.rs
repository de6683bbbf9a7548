use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the numerical core and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("size error: length {len} is not a power of two")]
    NotPowerOfTwo { len: usize },

    #[error("size error: Hadamard order {0} exceeds the 2^14 limit")]
    HadamardTooLarge(usize),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("undefined signal: reference tensor is all zero")]
    UndefinedSignal,

    #[error("config error: {0}")]
    Config(String),

    #[error("npy error at byte {offset}: {kind}")]
    Npy { offset: usize, kind: NpyErrorKind },

    #[error("csv error at line {line}: {msg}")]
    Csv { line: usize, msg: String },

    #[error("unsupported tensor file extension: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical contract violated: {0}")]
    Contract(String),
}

/// Distinct failure classes for NPY parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NpyErrorKind {
    BadMagic,
    UnsupportedVersion(u8, u8),
    MalformedHeader(String),
    WrongRank { expected: usize, found: usize },
    UnsupportedDtype(String),
    FortranOrder,
    Truncated { expected: usize, found: usize },
}

impl std::fmt::Display for NpyErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadMagic => write!(f, "missing \\x93NUMPY magic"),
            Self::UnsupportedVersion(a, b) => write!(f, "unsupported format version {a}.{b}"),
            Self::MalformedHeader(m) => write!(f, "malformed header: {m}"),
            Self::WrongRank { expected, found } => {
                write!(f, "rank error: expected rank {expected}, found rank {found}")
            }
            Self::UnsupportedDtype(d) => write!(f, "unsupported dtype '{d}'"),
            Self::FortranOrder => write!(f, "Fortran-order arrays are not supported"),
            Self::Truncated { expected, found } => {
                write!(f, "truncated data: expected {expected} bytes, found {found}")
            }
        }
    }
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Self::Dimension(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Parameter(_) => 2,
            Self::Io { .. } | Self::Npy { .. } | Self::Csv { .. } | Self::UnsupportedFormat(_) => 3,
            Self::Contract(_) | Self::NonFinite(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
