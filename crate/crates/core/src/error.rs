use thiserror::Error;

/// Errors raised anywhere in the crate.
///
/// The variants split into two families that callers (notably the CLI) map
/// to different exit statuses: input problems (`Validation`, `Structure`,
/// `Domain`, `Unsupported`, `Io`, `Format`) and numerical failures
/// (`Degenerate`, `NonConvergence`, `Internal`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    /// Records that do not form a valid counting-process layout.
    #[error("structural input error: {0}")]
    Structure(String),

    /// A function evaluated outside its domain (e.g. `ln t` at `t = 0`).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported parameter: {0}")]
    Unsupported(String),

    /// Data that cannot support the requested computation (empty risk set,
    /// zero person-time, ...).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("Newton-Raphson did not converge after {iterations} iterations (last iterate {coef:?})")]
    NonConvergence { iterations: usize, coef: Vec<f64> },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Degenerate(_) | Error::NonConvergence { .. } | Error::Internal(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation(_) => "validation",
            Error::Structure(_) => "structure",
            Error::Domain(_) => "domain",
            Error::Unsupported(_) => "unsupported",
            Error::Degenerate(_) => "degenerate",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
