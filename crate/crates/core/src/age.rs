//! Renewal-reward average age and the sawtooth time average it summarizes.
//!
//! With i.i.d. session lengths `Y` and delivery delay `D`, the time-averaged
//! age is `E[D] + E[Y²] / (2 E[Y])`. Under the session-end convention every
//! destination refreshes only when the session completes, so `D = Y`.

use crate::error::{AoiError, Result};
use crate::stats::batch_means_ratio;

/// Relative slack allowed when checking `E[X²] ≥ E[X]²` in floating point.
const JENSEN_SLACK: f64 = 1e-12;

/// Number of batches for the trace confidence interval.
pub const TRACE_BATCHES: usize = 100;

/// First and second moment of a nonnegative duration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPair {
    pub mean: f64,
    pub second_moment: f64,
}

impl MomentPair {
    pub fn new(mean: f64, second_moment: f64) -> Result<Self> {
        let ok = mean.is_finite()
            && second_moment.is_finite()
            && mean >= 0.0
            && second_moment >= mean * mean * (1.0 - JENSEN_SLACK);
        if ok {
            Ok(MomentPair { mean, second_moment })
        } else {
            Err(AoiError::Moments { mean, second_moment })
        }
    }

    /// A constant duration.
    pub fn deterministic(value: f64) -> Self {
        MomentPair {
            mean: value,
            second_moment: value * value,
        }
    }

    /// Moments of a sum of `count` i.i.d. copies of a variable with the given
    /// mean and variance.
    pub fn iid_sum(count: u64, mean: f64, variance: f64) -> Self {
        let k = count as f64;
        MomentPair {
            mean: k * mean,
            second_moment: k * variance + (k * mean).powi(2),
        }
    }

    pub fn variance(&self) -> f64 {
        (self.second_moment - self.mean * self.mean).max(0.0)
    }

    /// Moments of `self + other` for independent summands.
    pub fn add_independent(self, other: MomentPair) -> MomentPair {
        MomentPair {
            mean: self.mean + other.mean,
            second_moment: self.second_moment + other.second_moment + 2.0 * self.mean * other.mean,
        }
    }

    pub fn zero() -> Self {
        MomentPair {
            mean: 0.0,
            second_moment: 0.0,
        }
    }
}

fn check_age_inputs(y: MomentPair) -> Result<()> {
    MomentPair::new(y.mean, y.second_moment)?;
    if y.mean <= 0.0 {
        return Err(AoiError::Moments {
            mean: y.mean,
            second_moment: y.second_moment,
        });
    }
    Ok(())
}

/// `Δ = E[D] + E[Y²] / (2 E[Y])`.
pub fn average_age_formula(y: MomentPair, mean_delay: f64) -> Result<f64> {
    check_age_inputs(y)?;
    if !(mean_delay >= 0.0 && mean_delay.is_finite()) {
        return Err(AoiError::Numeric(format!(
            "mean delay must be nonnegative, got {mean_delay}"
        )));
    }
    Ok(mean_delay + y.second_moment / (2.0 * y.mean))
}

/// `Δ = E[Y] + E[Y²] / (2 E[Y])`, the session-end convention `D = Y`.
pub fn average_age_session_end(y: MomentPair) -> Result<f64> {
    check_age_inputs(y)?;
    Ok(y.mean + y.second_moment / (2.0 * y.mean))
}

/// A sequence of session lengths, optionally with the delay `D_j ≤ Y_j` after
/// which the update generated at the start of session `j` reached the
/// destination.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace {
    durations: Vec<f64>,
    delivery_offsets: Option<Vec<f64>>,
}

impl SessionTrace {
    /// Session-end convention: every update is delivered when its session ends.
    pub fn new(durations: Vec<f64>) -> Result<Self> {
        if let Some(bad) = durations.iter().find(|y| !(**y > 0.0 && y.is_finite())) {
            return Err(AoiError::Trace(format!(
                "session durations must be positive, got {bad}"
            )));
        }
        Ok(SessionTrace {
            durations,
            delivery_offsets: None,
        })
    }

    /// Measured per-session delivery delays.
    pub fn with_deliveries(durations: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        let mut trace = Self::new(durations)?;
        if offsets.len() != trace.durations.len() {
            return Err(AoiError::Trace("one delivery offset per session required".into()));
        }
        for (d, y) in offsets.iter().zip(&trace.durations) {
            if !(*d > 0.0 && d <= y) {
                return Err(AoiError::Trace(format!("delivery offset {d} outside (0, {y}]")));
            }
        }
        trace.delivery_offsets = Some(offsets);
        Ok(trace)
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn delivery_offsets(&self) -> Option<&[f64]> {
        self.delivery_offsets.as_deref()
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    fn delay(&self, j: usize) -> f64 {
        match &self.delivery_offsets {
            Some(d) => d[j],
            None => self.durations[j],
        }
    }
}

/// Time-averaged age with a 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeEstimate {
    pub mean_age: f64,
    /// Zero when the trace holds fewer than two cycles.
    pub half_width: f64,
    pub sessions_used: usize,
}

impl AgeEstimate {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean_age).abs() <= self.half_width
    }
}

/// Exact integral of the sawtooth age curve divided by elapsed time.
///
/// Integration starts at the first delivery and ends at the last one, so no
/// initial age has to be assumed. Between the delivery of update `j` (age
/// `D_j`) and of update `j+1` the age grows linearly for
/// `Y_j - D_j + D_{j+1}` time units, which under `D = Y` is the familiar cycle
/// area `Y_j Y_{j+1} + Y_{j+1}² / 2` over length `Y_{j+1}`.
pub fn time_average_from_trace(trace: &SessionTrace) -> Result<AgeEstimate> {
    if trace.len() < 2 {
        return Err(AoiError::Trace(format!(
            "need at least 2 sessions, got {}",
            trace.len()
        )));
    }
    let cycles = trace.len() - 1;
    let mut areas = Vec::with_capacity(cycles);
    let mut lengths = Vec::with_capacity(cycles);
    for j in 0..cycles {
        let start_age = trace.delay(j);
        let length = trace.durations[j] - start_age + trace.delay(j + 1);
        let end_age = start_age + length;
        areas.push(0.5 * (start_age + end_age) * length);
        lengths.push(length);
    }
    let (mean_age, half_width) = batch_means_ratio(&areas, &lengths, TRACE_BATCHES, 0.95);
    Ok(AgeEstimate {
        mean_age,
        half_width,
        sessions_used: trace.len(),
    })
}
