use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid catalyst: {0}")]
    InvalidCatalyst(String),

    #[error("problem too large: {what} = {got}, limit {limit}")]
    SizeGuard {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    #[error("anneal parameter s = {0} outside [0, 1]")]
    ScheduleOutOfRange(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigensolver did not converge at s = {s}")]
    Eigensolver { s: f64 },

    #[error("no interior gap minimum found{0}")]
    NoGapMinimum(String),

    #[error("refinement did not converge: {0}")]
    Refinement(String),

    #[error("bracket [{lo}, {hi}] contains no catalyst-created minimum")]
    Bracket { lo: f64, hi: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("fit failure: {0}")]
    Fit(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Eigensolver { .. }
                | Error::NoGapMinimum(_)
                | Error::Refinement(_)
                | Error::Bracket { .. }
                | Error::Integrator(_)
                | Error::Fit(_)
                | Error::Degenerate(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
