//! Error types shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a precondition (dimensions, ranges, non-finite values).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Covariance estimate is singular and cannot back a knockoff model.
    #[error("singular covariance: {0}")]
    SingularCovariance(String),

    /// A matrix required to be positive definite is not.
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The path solver failed to converge at every grid point.
    #[error("solver failure: {0}")]
    SolverFailure(String),

    /// Outcome vector is constant where two classes are required.
    #[error("degenerate outcome: {0}")]
    DegenerateOutcome(String),

    /// Aggregation schedule levels outside [0, 1] or inconsistent length.
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    /// A knockoff run inside an aggregation failed; `run` is the 1-based run index.
    #[error("aggregation run {run} failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<Error>,
    },

    /// Conventional power is undefined when the true support is empty.
    #[error("conventional power is undefined for an empty true support")]
    UndefinedPower,

    /// X*beta vanished, so the signal cannot be rescaled to the target SNR.
    #[error("degenerate signal: X*beta is zero, cannot rescale to target SNR")]
    DegenerateSignal,

    /// Cohort filtering removed every sample.
    #[error("empty cohort: no samples satisfy the age/BMI ranges")]
    EmptyCohort,

    /// No positive count exists, so zero imputation has no reference minimum.
    #[error("all-zero table: {0}")]
    AllZeroTable(String),

    /// Log transform requires strictly positive entries.
    #[error("non-positive entry at sample {row}, taxon {col}: run zero imputation first")]
    NonPositiveEntry { row: String, col: String },

    /// Data file could not be parsed; carries row context where available.
    #[error("load error in {path}{}: {msg}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    Load {
        path: String,
        row: Option<usize>,
        msg: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
