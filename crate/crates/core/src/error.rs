use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped by category so the CLI can map them onto exit codes
/// without string matching.
#[derive(Debug, Error)]
pub enum TieError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("pitch mismatch: {0} m vs {1} m")]
    PitchMismatch(f64, f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative intensity {value} at (row {row}, col {col})")]
    NegativeIntensity { row: usize, col: usize, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty region: {0}")]
    EmptyRegion(&'static str),

    #[error("degenerate image: {0}")]
    DegenerateImage(&'static str),

    #[error("bad magic in {path}: expected \"TIEF1\"")]
    BadMagic { path: PathBuf },

    #[error("truncated field file {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("trailing data in field file {path}: expected {expected} bytes, found {actual}")]
    TrailingData {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("dtype mismatch in {path}: expected {expected}, found {found}")]
    DtypeMismatch {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("malformed document {path}: {message}")]
    Malformed { path: PathBuf, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TieError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TieError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TieError::InvalidParameter(msg.into())
    }

    /// True for errors caused by a malformed or inconsistent input file.
    pub fn is_input_format(&self) -> bool {
        matches!(
            self,
            TieError::BadMagic { .. }
                | TieError::Truncated { .. }
                | TieError::TrailingData { .. }
                | TieError::DtypeMismatch { .. }
                | TieError::Malformed { .. }
                | TieError::ShapeMismatch { .. }
                | TieError::PitchMismatch(..)
        )
    }

    /// Short stable category name used in machine-parseable error lines.
    pub fn category(&self) -> &'static str {
        match self {
            TieError::ShapeMismatch { .. } => "shape-mismatch",
            TieError::PitchMismatch(..) => "pitch-mismatch",
            TieError::InvalidParameter(_) => "invalid-parameter",
            TieError::NegativeIntensity { .. } => "negative-intensity",
            TieError::NonFinite(_) => "non-finite",
            TieError::EmptyRegion(_) => "empty-region",
            TieError::DegenerateImage(_) => "degenerate-image",
            TieError::BadMagic { .. } => "bad-magic",
            TieError::Truncated { .. } => "truncated",
            TieError::TrailingData { .. } => "trailing-data",
            TieError::DtypeMismatch { .. } => "dtype-mismatch",
            TieError::Malformed { .. } => "malformed",
            TieError::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, TieError>;
