use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("eigensolver did not converge after {iterations} iterations; residuals {residuals:?}")]
    EigenNonConvergence {
        iterations: usize,
        residuals: Vec<f64>,
    },

    #[error("infeasible occupation: supremum of occupation sum {achievable:e} is below N0 = {n0}")]
    InfeasibleOccupation { achievable: f64, n0: f64 },

    /// The energy window above the Fermi level could not be closed with the
    /// permitted number of eigenpairs.
    #[error(
        "truncation overflow: {levels} levels reach {reached:.6} above the Fermi level, \
         window needs {needed:.6}"
    )]
    TruncationOverflow {
        levels: usize,
        reached: f64,
        needed: f64,
    },

    #[error("precision: {0}")]
    Precision(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
