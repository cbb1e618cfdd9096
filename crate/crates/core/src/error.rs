use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numerical integration did not converge: {0}")]
    Integration(String),

    #[error("SDE simulation diverged at step {step} of trajectory {trajectory}")]
    Divergence { trajectory: usize, step: usize },

    #[error("training diverged at epoch {epoch}: {detail}")]
    TrainingDivergence { epoch: usize, detail: String },

    #[error("non-finite residual at batch point {index} ({point:?})")]
    NonFiniteResidual { index: usize, point: Vec<f64> },

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
