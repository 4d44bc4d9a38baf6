use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// `m + n - p > N`: the four-block decomposition of the ambient space cannot exist.
    #[error("infeasible geometry: m + n - p = {required} exceeds ambient dimension {ambient}")]
    InfeasibleGeometry { required: usize, ambient: usize },

    /// The observation is incompatible with the prior ellipsoid.
    #[error("empty ellipsoid slice: squared radius budget {budget:e} is negative")]
    EmptySlice { budget: f64 },

    #[error("unsupported prior: {0}")]
    UnsupportedPrior(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn contract(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::ContractViolation(msg()))
    }
}
