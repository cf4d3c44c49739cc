use thiserror::Error;

use crate::integrator::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("point outside the chart: guard `{guard}` violated (margin {margin:e})")]
    Domain { guard: String, margin: f64 },

    #[error("feedback is singular: guard `{guard}` violated (margin {margin:e})")]
    Singular { guard: String, margin: f64 },

    #[error("inversion failed after {iterations} iterations (residual {residual:e})")]
    InversionFailed { residual: f64, iterations: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NewtonDiverged { residual: f64, iterations: usize },

    #[error("induced scheme is not affine in (state, control): superposition defect {defect:e}")]
    AffinityViolation { defect: f64 },

    #[error("unknown discretization map kind `{0}`")]
    UnknownKind(String),

    #[error("step {k} failed: {source}")]
    StepFailed {
        k: usize,
        #[source]
        source: Box<Error>,
        partial: Box<Trajectory>,
    },

    #[error("simulation at h = {h} failed: {source}")]
    OrderFailed {
        h: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("trajectory grids differ: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(what: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what: what.into(),
            expected,
            found,
        }
    }
}
