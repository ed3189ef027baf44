use thiserror::Error;

/// Errors raised by model construction, validation and the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown state {0}")]
    UnknownState(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("total transition rate of state {state} is zero at age {age}")]
    ZeroTotalRate { state: usize, age: f64 },

    #[error("root finder did not converge: {0}")]
    NonConvergence(String),

    #[error("no-arbitrage condition violated: {0}")]
    NoArbitrage(String),

    #[error("survival probability of state {state} underflows at age {age}")]
    SurvivalUnderflow { state: usize, age: f64 },

    #[error("numerical instability: {0}")]
    Instability(String),

    #[error("point outside grid support: {0}")]
    OutOfGrid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_)
            | Error::UnknownState(_)
            | Error::ZeroTotalRate { .. }
            | Error::NoArbitrage(_)
            | Error::OutOfGrid(_) => ErrorKind::Validation,
            Error::NonFinite(_)
            | Error::NonConvergence(_)
            | Error::SurvivalUnderflow { .. }
            | Error::Instability(_) => ErrorKind::Numerical,
            Error::Config(_) | Error::Io { .. } | Error::Json(_) => ErrorKind::Io,
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
