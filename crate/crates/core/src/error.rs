use thiserror::Error;

use crate::specfun::SpecFunError;

#[derive(Debug, Error)]
pub enum BalanceError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("singular precision matrix at iteration {iter}: {msg}")]
    Singular { iter: usize, msg: String },
    #[error("line search exhausted at iteration {iter} during {update} update")]
    StepFailure { iter: usize, update: &'static str },
    #[error("degenerate target: |delta y| = {0:e} below tolerance")]
    DegenerateTarget(f64),
    #[error(transparent)]
    SpecFun(#[from] SpecFunError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl BalanceError {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(self, BalanceError::Parse(_) | BalanceError::Validation(_) | BalanceError::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, BalanceError>;
