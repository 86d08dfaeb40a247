//! Error type shared by every module, with process exit codes for the CLI.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: max |a[i][j] - conj(a[j][i])| = {dev:.3e}")]
    NotHermitian { dev: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("right-hand side is zero")]
    ZeroRhs,

    #[error("eigenvalue {value:.6e} out of range: {reason}")]
    EigenvalueRange { value: f64, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system: eigenvalue magnitude {0:.3e} below 1e-12")]
    Singular(f64),

    #[error("degenerate postselection: probability {0:.3e}")]
    DegeneratePostselection(f64),

    #[error("rotation out of range: |sin theta| = {0:.6} exceeds 1")]
    RotationOutOfRange(f64),

    #[error("argument {0:.6e} outside [-1/e, 0)")]
    LambertDomain(f64),

    #[error("simulator cross-check failed: {0}")]
    CrossCheck(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("statevector file {path}: {reason}")]
    BadStateFile { path: PathBuf, reason: String },
}

impl Error {
    /// Process exit code: 2 validation, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotHermitian { .. }
            | Error::Dimension(_)
            | Error::ZeroRhs
            | Error::EigenvalueRange { .. }
            | Error::InvalidParameter(_)
            | Error::RotationOutOfRange(_)
            | Error::LambertDomain(_) => 2,
            Error::Singular(_) | Error::DegeneratePostselection(_) | Error::CrossCheck(_) => 3,
            Error::Io { .. } | Error::BadStateFile { .. } => 4,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
