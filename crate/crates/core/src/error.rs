use thiserror::Error;

/// Failures surfaced by the optimizer, the oracles and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The inner Hessian was not numerically positive definite.
    #[error("factorization failure{}: pivot {pivot} of {dim} is {value:e}", fmt_round(*.round))]
    FactorizationFailure {
        round: Option<usize>,
        pivot: usize,
        dim: usize,
        value: f64,
    },
    #[error("non-finite iterate at round {round}, inner step {step}")]
    NonFiniteIterate { round: usize, step: usize },
    #[error("stream exhausted at round {t} (stream has {len} rounds)")]
    StreamExhausted { t: usize, len: usize },
    #[error("no comparator oracle available for round {round}")]
    OracleUnavailable { round: usize },
    #[error("{oracle} oracle did not converge after {iters} iterations (residual {residual:e})")]
    OracleDiverged {
        oracle: &'static str,
        iters: usize,
        residual: f64,
    },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid config: {0}")]
    Config(String),
}

fn fmt_round(round: Option<usize>) -> String {
    match round {
        Some(t) => format!(" at round {t}"),
        None => String::new(),
    }
}

impl Error {
    /// Short machine-readable category, used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::FactorizationFailure { .. } => "factorization_failure",
            Error::NonFiniteIterate { .. } => "non_finite_iterate",
            Error::StreamExhausted { .. } => "stream_exhausted",
            Error::OracleUnavailable { .. } => "oracle_unavailable",
            Error::OracleDiverged { .. } => "oracle_diverged",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Parse { .. } => "parse_error",
            Error::EmptyDataset => "empty_dataset",
            Error::Io(_) => "io_error",
            Error::Config(_) => "invalid_config",
        }
    }

    /// Attach a round index to errors that carry one.
    pub(crate) fn at_round(self, t: usize) -> Self {
        match self {
            Error::FactorizationFailure {
                round: None,
                pivot,
                dim,
                value,
            } => Error::FactorizationFailure {
                round: Some(t),
                pivot,
                dim,
                value,
            },
            Error::NonFiniteIterate { step, .. } => Error::NonFiniteIterate { round: t, step },
            Error::OracleUnavailable { round: 0 } => Error::OracleUnavailable { round: t },
            other => other,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
