use thiserror::Error;

/// Errors raised by the analytic engine, the simulator and the geometry tools.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AoiError {
    #[error("invalid order statistic: k={k}, n={n} (need 1 <= k <= n)")]
    OrderIndex { k: u64, n: u64 },

    #[error("rate must be positive and finite, got {0}")]
    Rate(f64),

    #[error("impossible moment pair: mean={mean}, second moment={second_moment}")]
    Moments { mean: f64, second_moment: f64 },

    #[error("invalid trace: {0}")]
    Trace(String),

    #[error("invalid hierarchy configuration: {0}")]
    Config(String),

    #[error("invalid count plan: {0}")]
    Plan(String),

    #[error("need at least {min} trials, got {got}")]
    Trials { min: usize, got: usize },

    #[error("invalid network: {0}")]
    Network(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, AoiError>;

pub(crate) fn check_rate(rate: f64) -> Result<f64> {
    if rate > 0.0 && rate.is_finite() {
        Ok(rate)
    } else {
        Err(AoiError::Rate(rate))
    }
}
