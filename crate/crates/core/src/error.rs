use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NonHermitian(f64),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("invalid bandwidth splitting ratio {0} (the communication band is empty)")]
    InvalidAlpha(f64),

    #[error("Fisher information {0:.3e} is not positive")]
    SingularFim(f64),

    #[error("rank-one recovery failed: none of {candidates} candidates is feasible")]
    RecoveryFailed { candidates: usize },

    #[error("no bandwidth splitting ratio on the grid satisfies the rate constraints")]
    EmptyFeasibleSet,

    #[error("scenario is infeasible: {0}")]
    InfeasibleScenario(String),

    #[error("subproblem {subproblem} failed at iteration {iteration}: {reason}")]
    SubproblemFailure {
        iteration: usize,
        subproblem: &'static str,
        reason: String,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
