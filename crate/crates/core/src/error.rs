use thiserror::Error;

/// Errors raised by graph validation, model assembly, statistic construction
/// and the simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph: running intersection fails at clique {k}: separator not contained in any earlier clique")]
    NotDecomposable { k: usize },

    #[error("graph: {0}")]
    NodeCoverage(String),

    #[error("graph: clique {k} has an empty separator (disconnected graph); enable allow_empty_separators to accept it")]
    EmptySeparator { k: usize },

    #[error("graph: bad shape: {0}")]
    BadShape(String),

    #[error("graph: index mismatch: {0}")]
    IndexMismatch(String),

    #[error("model: separator of clique {k} disagrees with clique {q} (max deviation {max_dev:.3e})")]
    InconsistentSeparator { k: usize, q: usize, max_dev: f64 },

    #[error("model: {what} is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotSpd { what: String, min_eig: f64 },

    #[error("model: degenerate input: {0}")]
    DegenerateInput(String),

    #[error("model: Cholesky factorization of {0} failed")]
    CholeskyFailure(String),

    #[error("statistic: gamma = {gamma} outside (0, {upper}) for K = {k}")]
    GammaOutOfRange { gamma: f64, upper: f64, k: usize },

    #[error("statistic: dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("statistic: bad priors ({pi0}, {pi1}): both must be positive and sum to 1")]
    BadPriors { pi0: f64, pi1: f64 },

    #[error("bounds: K = {0} but the bound requires K > 1")]
    BadK(usize),

    #[error("protocol: ordered decision {ordered:?} disagrees with centralized decision {centralized:?} (T = {statistic})")]
    EquivalenceViolation {
        ordered: crate::Hypothesis,
        centralized: crate::Hypothesis,
        statistic: f64,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Coarse grouping used by the CLI to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::GammaOutOfRange { .. } | Error::BadPriors { .. } | Error::BadK(_) => {
                ErrorKind::Config
            }
            Error::NotDecomposable { .. }
            | Error::NodeCoverage(_)
            | Error::EmptySeparator { .. }
            | Error::BadShape(_)
            | Error::IndexMismatch(_)
            | Error::DimensionMismatch(_) => ErrorKind::Config,
            Error::InconsistentSeparator { .. }
            | Error::NotSpd { .. }
            | Error::DegenerateInput(_)
            | Error::CholeskyFailure(_) => ErrorKind::Numerical,
            Error::EquivalenceViolation { .. } => ErrorKind::Internal,
            Error::Io(_) => ErrorKind::Io,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Internal,
    Io,
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
