use thiserror::Error;

use crate::driver::IterateRecord;

pub type Result<T> = std::result::Result<T, PsarpError>;

#[derive(Debug, Error)]
pub enum PsarpError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("evaluation of element {element} returned a non-finite value")]
    EvaluationFailure { element: String },

    #[error("derivative of singular element {element} is undefined at U_i x = 0")]
    SingularDerivative { element: usize },

    #[error("singular input to the two-sided displacement: x_i = {x}, x_i + s_i = {xs}")]
    SingularInput { x: f64, xs: f64 },

    #[error("projection did not converge after {sweeps} sweeps (last change {change:e})")]
    ProjectionFailure { sweeps: usize, change: f64 },

    #[error("criticality solver failed: {0}")]
    ChiSolver(String),

    #[error("step computation failed after {inner_iters} inner iterations (best chi_m {chi_m:e}, bound {bound:e})")]
    StepFailure {
        inner_iters: usize,
        best_step: Vec<f64>,
        chi_m: f64,
        bound: f64,
    },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("solve aborted at iteration {iteration}: {source}")]
    SolveAborted {
        iteration: usize,
        #[source]
        source: Box<PsarpError>,
        trace: Vec<IterateRecord>,
    },

    #[error("descriptor error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl PsarpError {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        PsarpError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
