//! Density estimation, analytic steady states, error metrics, and the
//! statistical checks on crossing counts and exit probabilities.

mod bounds;
mod exit;
mod histogram;
mod oracle;

use thiserror::Error;

pub use bounds::{check_crossing_bound, chi2_survival, crossing_lower_bound, BounceStats, CrossingReport, CrossingRow};
pub use exit::{exit_probability_experiment, ExitReport, ExitRow};
pub use histogram::{histogram_accumulate, l2_distance, l2_error, l2_error_against, DensityEstimate, Histogram};
pub use oracle::{NormalizerCheck, Potential, SteadyStateOracle};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("estimate grid does not match: {0}")]
    GridMismatch(String),
    #[error("no vertex-touching steps were recorded")]
    EmptyStats,
    #[error("invalid oracle: {0}")]
    BadOracle(String),
}
