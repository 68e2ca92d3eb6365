use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrapeError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty operator or state")]
    Empty,

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid controls: {0}")]
    InvalidControls(String),

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("amplitude partial for control {control} disagrees with finite differences (analytic {analytic}, numeric {numeric})")]
    AmplitudePartial {
        control: usize,
        analytic: f64,
        numeric: f64,
    },

    #[error("trajectory {index}: {message}")]
    InvalidTrajectory { index: usize, message: String },

    #[error("trajectory {0} has no target state, which the functional requires")]
    MissingTarget(usize),

    #[error("custom functionals have no analytic chi states; use chi_numeric")]
    CustomChi,

    #[error("propagation record has no cached step operators")]
    MissingStepOperators,

    #[error("invalid optimizer options: {0}")]
    InvalidOptions(String),

    #[error("line search precondition violated: directional derivative {0} is not negative")]
    NotDescent(f64),
}

pub type Result<T> = std::result::Result<T, GrapeError>;

pub(crate) fn mismatch(context: impl Into<String>, expected: usize, found: usize) -> GrapeError {
    GrapeError::DimensionMismatch {
        context: context.into(),
        expected,
        found,
    }
}
