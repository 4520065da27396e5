use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument or configuration violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// The antenna budget cannot meet the per-sector requirements.
    #[error("infeasible: {reason}")]
    Infeasible {
        reason: String,
        /// How many antennas short the budget is, when that is meaningful.
        deficit: Option<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Exhaustive search declined because the instance is too large.
    #[error("refused: {0}")]
    Refused(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn infeasible(reason: impl Into<String>, deficit: Option<f64>) -> Self {
        Error::Infeasible {
            reason: reason.into(),
            deficit,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Schema { .. } | Error::Parse(_) | Error::Io(_) => 2,
            Error::Infeasible { .. } | Error::Refused(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
