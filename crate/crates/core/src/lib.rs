//! Knockoff-based FDR-controlled variable selection for sparse linear and
//! logistic regression, with an aggregation scheme that runs the filter k
//! times at a schedule of target levels and unions the selections.
//!
//! Modules:
//! - [`knockoff`]: covariance estimation and Gaussian knockoff sampling
//! - [`path`]: ℓ1 coefficient paths and entry statistics
//! - [`filter`]: W statistics, thresholds, selection
//! - [`ako`]: schedules and aggregated selection
//! - [`sim`]: Monte-Carlo harness for FDR/power sweeps
//! - [`micro`]: microbiome count-table preprocessing and end-to-end selection

pub mod ako;
pub mod error;
pub mod filter;
pub mod knockoff;
pub mod path;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
