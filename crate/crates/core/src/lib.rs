//! Age of information for hierarchical cooperation in ad hoc networks.
//!
//! The crate computes closed-form and simulated average age for an
//! `n`-node network where each session every source delivers one packet to its
//! destination through a cluster hierarchy of depth `h`:
//!
//! - [`order_stats`]: moments and samplers for exponential order statistics
//! - [`age`]: renewal-reward average age from session moments or traces
//! - [`hierarchy`]: cluster exponents, rounded node counts, exponent search
//! - [`analytic`]: per-phase moments of the session duration
//! - [`sim`]: Monte Carlo sessions, exact and bounded
//! - [`geometry`]: grid layout and protocol-model checks for the TDMA schedule

pub mod age;
pub mod analytic;
pub mod error;
pub mod geometry;
pub mod hierarchy;
pub mod order_stats;
pub mod sim;
pub mod stats;

pub use age::{
    average_age_formula, average_age_session_end, time_average_from_trace, AgeEstimate, MomentPair, SessionTrace,
};
pub use analytic::{average_age_analytic, phase_moments, AgeConvention, MomentMode, Phase, PhaseMoments, Term};
pub use error::{AoiError, Result};
pub use hierarchy::{alpha, optimize_exponents, CountPlan, ExponentOptimum, HierarchyConfig, LevelRates};
pub use order_stats::{
    expected_order_stat, sample_order_stat, second_moment_order_stat, variance_order_stat, OrderStatSpec,
};
pub use sim::{run_experiment, DelayMode, ExperimentOptions, ExperimentResult, SessionSample, Variant};
