use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("shape mismatch in {context}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("negative eigenvalue {0:e} for a covariance")]
    NegativeEigenvalue(f64),
    #[error("splats are not sorted by the {0} key (first violation at index {1})")]
    Unsorted(&'static str, usize),
    #[error("raster aux does not match the splat list: {0}")]
    AuxMismatch(String),
    #[error("could not place {placed} of {requested} vehicles after {attempts} attempts")]
    Placement {
        placed: usize,
        requested: usize,
        attempts: usize,
    },
    #[error("fit diverged at iteration {iteration}: loss = {loss}")]
    Divergence { iteration: usize, loss: f64 },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status for this error: 2 for bad input, 3 for numerical
    /// failures, 4 for divergence, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. }
            | Error::ShapeMismatch { .. }
            | Error::Parse(_)
            | Error::Unsorted(..)
            | Error::AuxMismatch(_)
            | Error::Placement { .. } => 2,
            Error::NonFinite(_) | Error::Asymmetric(_) | Error::NegativeEigenvalue(_) => 3,
            Error::Divergence { .. } => 4,
            Error::Io(_) => 1,
        }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn ensure_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
