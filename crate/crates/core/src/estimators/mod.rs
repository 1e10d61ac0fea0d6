//! Moment estimation, log-log slope fitting, tail-index estimation and
//! divergence diagnostics.

mod moments;
mod scaling;
mod tail;

use thiserror::Error;

pub use moments::{
    conditional_moment, empirical_moment, gaussian_abs_moment, median_of_means_moment, weighted_conditional_moment,
    weighted_moment, MomentEstimate, BATCHES,
};
pub use scaling::{
    scaling_exponent, CurvePoint, MomentEntry, MomentSource, MomentTable, ScalingCurve, ScalingFit, MIN_LAGS,
    THRESHOLD_MARGIN,
};
pub use tail::{
    default_hill_k, divergence_diagnostic, hill_estimator, DivergenceFlag, DivergenceReport, HillEstimate,
    GROWTH_BLOCKS, MIN_DIAGNOSTIC_SAMPLES,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("no samples")]
    Empty,
    #[error("moment order q = {0} must be at least 1")]
    InvalidOrder(f64),
    #[error("Hill estimator: k = {k} needs 10 <= k < n = {n}")]
    InvalidK { k: usize, n: usize },
    #[error("Hill estimator: sample {0} is not positive")]
    Domain(f64),
    #[error("q = {q}: only {usable} usable lags, need at least {needed}")]
    InsufficientData { q: f64, usable: usize, needed: usize },
    #[error("divergence diagnostic needs at least {needed} samples, got {got}")]
    TooFewSamples { got: usize, needed: usize },
    #[error("moments CSV line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{weights} weights for {samples} samples")]
    WeightCount { samples: usize, weights: usize },
    #[error("weight {0} is not nonnegative and finite")]
    InvalidWeight(f64),
}
