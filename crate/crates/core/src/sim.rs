//! Monte Carlo sampling of session durations.
//!
//! Two variants are sampled. The exact variant follows the scheme step by
//! step: parallel units wait for the slowest one, sequential steps add up.
//! The bounded variant replaces each step by the looser sum of maxima used for
//! the closed-form moments, so it dominates the exact variant.
//!
//! Every order statistic over a large index set is drawn through its
//! distributional closure (a minimum of `m` exponentials is one exponential of
//! rate `mλ`, a maximum comes from [`sample_max`]) instead of materializing `m`
//! draws. A maximum over zero draws, e.g. relaying to the other nodes of a
//! one-node subcell, takes zero time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::age::{time_average_from_trace, AgeEstimate, SessionTrace};
use crate::error::{AoiError, Result};
use crate::hierarchy::{CountPlan, HierarchyConfig, LevelRates};
use crate::order_stats::{mean_max, sample_max};
use crate::stats::RunningMoments;

/// Minimum number of trials accepted by [`run_experiment`].
pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Step-by-step durations of the scheme.
    #[default]
    Exact,
    /// Sum-of-maxima upper bounds on phases I and III.
    Bounded,
}

/// Where link delays come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DelayMode {
    #[default]
    Random,
    /// Every order statistic is replaced by its mean, making sessions
    /// deterministic. Meant for testing.
    Mean,
}

/// Source of link delays for one session.
pub struct Delays<'a, R: Rng + ?Sized> {
    rng: &'a mut R,
    mode: DelayMode,
}

impl<'a, R: Rng + ?Sized> Delays<'a, R> {
    pub fn new(rng: &'a mut R, mode: DelayMode) -> Self {
        Delays { rng, mode }
    }

    pub fn random(rng: &'a mut R) -> Self {
        Self::new(rng, DelayMode::Random)
    }

    /// One `Exp(rate)` link delay.
    pub fn single(&mut self, rate: f64) -> f64 {
        match self.mode {
            DelayMode::Random => self.rng.sample::<f64, _>(Exp1) / rate,
            DelayMode::Mean => 1.0 / rate,
        }
    }

    /// Maximum of `m` i.i.d. `Exp(rate)` delays; zero when `m = 0`.
    pub fn max_of(&mut self, m: u64, rate: f64) -> f64 {
        match self.mode {
            DelayMode::Random => sample_max(m, rate, self.rng),
            DelayMode::Mean => mean_max(m, rate),
        }
    }
}

/// Durations of one session.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SessionSample {
    pub phase1: f64,
    pub phase2: f64,
    pub phase3: f64,
    pub total: f64,
    pub variant: Variant,
}

impl SessionSample {
    fn new(phase1: f64, phase2: f64, phase3: f64, variant: Variant) -> Self {
        SessionSample {
            phase1,
            phase2,
            phase3,
            total: phase1 + phase2 + phase3,
            variant,
        }
    }
}

fn max_over<F: FnMut() -> f64>(count: u64, mut f: F) -> f64 {
    (0..count).fold(0.0, |acc, _| acc.max(f()))
}

fn sum_over<F: FnMut() -> f64>(count: u64, mut f: F) -> f64 {
    (0..count).fold(0.0, |acc, _| acc + f())
}

/// Inter-cell MIMO phase: each cell in turn reaches `M` destination cells,
/// each through the fastest of `M²` node links.
fn cell_mimo<R: Rng + ?Sized>(plan: &CountPlan, rates: &LevelRates, d: &mut Delays<'_, R>) -> f64 {
    let m = plan.nodes_per_cell();
    let link = (m * m) as f64 * rates.rate(0);
    sum_over(plan.cells(), || d.max_of(m, link))
}

/// Bounded variant, depth 0 or 1.
///
/// Depth 1 with `s` nodes per subcell, `q` subcells per cell, `N` nodes and
/// `T` subcells samples
/// `Σ_s max_N(λ2) + Σ_q max_T(s²λ1) + Σ_q max_N(λ2)` for phase I and
/// `Σ_s max_N(λ2) + Σ_q max_{Cs}(s²λ1) + Σ_s max_T(λ2)` for phase III.
pub fn simulate_session_bounded<R: Rng + ?Sized>(
    plan: &CountPlan,
    rates: &LevelRates,
    d: &mut Delays<'_, R>,
) -> Result<SessionSample> {
    let c = plan.cells();
    let n = plan.total_nodes();
    let sample = match plan.depth() {
        0 => {
            let m = plan.nodes_per_cell();
            let l1 = rates.rate(1);
            let p1 = sum_over(m, || d.max_of(n, l1));
            let p2 = cell_mimo(plan, rates, d);
            let p3 = sum_over(m, || d.max_of(c, l1));
            SessionSample::new(p1, p2, p3, Variant::Bounded)
        }
        1 => {
            let s = plan.nodes_per_subcell();
            let q = plan.subcells_per_cell();
            let t = plan.units_at(1);
            let (l1, l2) = (rates.rate(1), rates.rate(2));
            let link = (s * s) as f64 * l1;
            let p1 =
                sum_over(s, || d.max_of(n, l2)) + sum_over(q, || d.max_of(t, link)) + sum_over(q, || d.max_of(n, l2));
            let p2 = cell_mimo(plan, rates, d);
            let p3 = sum_over(s, || d.max_of(n, l2))
                + sum_over(q, || d.max_of(c * s, link))
                + sum_over(s, || d.max_of(t, l2));
            SessionSample::new(p1, p2, p3, Variant::Bounded)
        }
        depth => {
            return Err(AoiError::Plan(format!(
                "bounded variant is defined for depth <= 1, got {depth}"
            )))
        }
    };
    Ok(sample)
}

/// Exact variant for any depth.
///
/// Depths 0 and 1 are written out directly; deeper plans go through
/// [`recursive_phase1`] and [`recursive_phase3`].
pub fn simulate_session_exact<R: Rng + ?Sized>(
    plan: &CountPlan,
    rates: &LevelRates,
    d: &mut Delays<'_, R>,
) -> Result<SessionSample> {
    let c = plan.cells();
    let sample = match plan.depth() {
        0 => {
            // in-cell TDMA: every node broadcasts to the other M-1
            let m = plan.nodes_per_cell();
            let l1 = rates.rate(1);
            let p1 = max_over(c, || sum_over(m, || d.max_of(m - 1, l1)));
            let p2 = cell_mimo(plan, rates, d);
            let p3 = max_over(c, || sum_over(m, || d.single(l1)));
            SessionSample::new(p1, p2, p3, Variant::Exact)
        }
        1 => {
            let s = plan.nodes_per_subcell();
            let q = plan.subcells_per_cell();
            let t = plan.units_at(1);
            let (l1, l2) = (rates.rate(1), rates.rate(2));
            let link = (s * s) as f64 * l1;

            let form_tdma = max_over(t, || sum_over(s, || d.max_of(s - 1, l2)));
            let form_mimo = max_over(c, || sum_over(q, || d.max_of(q - 1, link)));
            let form_relay = max_over(t, || sum_over(q - 1, || d.max_of(s - 1, l2)));
            let p2 = cell_mimo(plan, rates, d);
            let p3 = if q == 1 {
                // a lone subcell needs no secondary packets
                max_over(t, || sum_over(s, || d.single(l2)))
            } else {
                let tdma = max_over(t, || sum_over(s, || d.max_of(s - 1, l2)));
                let mimo = max_over(c, || sum_over(q, || d.max_of(s, link)));
                let relay = max_over(t, || sum_over(s, || d.single(l2)));
                tdma + mimo + relay
            };
            SessionSample::new(form_tdma + form_mimo + form_relay, p2, p3, Variant::Exact)
        }
        _ => {
            let p1 = phase_one(plan, rates, 0, d);
            let p2 = cell_mimo(plan, rates, d);
            let p3 = phase_three(plan, rates, 0, d);
            SessionSample::new(p1, p2, p3, Variant::Exact)
        }
    };
    Ok(sample)
}

pub fn simulate_session<R: Rng + ?Sized>(
    plan: &CountPlan,
    rates: &LevelRates,
    variant: Variant,
    d: &mut Delays<'_, R>,
) -> Result<SessionSample> {
    match variant {
        Variant::Exact => simulate_session_exact(plan, rates, d),
        Variant::Bounded => simulate_session_bounded(plan, rates, d),
    }
}

/// Time for every level-`level` unit to hold the mega packet of all its nodes.
///
/// At the deepest level the nodes of each unit take TDMA turns broadcasting to
/// the rest of the unit. Above it, the subunits first build their own packets
/// recursively, then exchange them by MIMO, then relay every received packet
/// to all of their nodes.
pub fn recursive_phase1<R: Rng + ?Sized>(
    level: usize,
    plan: &CountPlan,
    rates: &LevelRates,
    d: &mut Delays<'_, R>,
) -> Result<f64> {
    check_level(level, plan)?;
    Ok(phase_one(plan, rates, level, d))
}

/// Time to deliver packets that reached a level-`level` unit to their
/// destination nodes inside it.
///
/// The last step relays each packet to a single recipient. A unit with a
/// single subunit skips the secondary packet and MIMO steps.
pub fn recursive_phase3<R: Rng + ?Sized>(
    level: usize,
    plan: &CountPlan,
    rates: &LevelRates,
    d: &mut Delays<'_, R>,
) -> Result<f64> {
    check_level(level, plan)?;
    Ok(phase_three(plan, rates, level, d))
}

fn check_level(level: usize, plan: &CountPlan) -> Result<()> {
    if level > plan.depth() {
        return Err(AoiError::Plan(format!(
            "level {level} exceeds plan depth {}",
            plan.depth()
        )));
    }
    Ok(())
}

fn phase_one<R: Rng + ?Sized>(plan: &CountPlan, rates: &LevelRates, level: usize, d: &mut Delays<'_, R>) -> f64 {
    let units = plan.units_at(level);
    let size = plan.unit_sizes()[level];
    if level == plan.depth() {
        let rate = rates.rate(level + 1);
        return max_over(units, || sum_over(size, || d.max_of(size - 1, rate)));
    }
    let inner = phase_one(plan, rates, level + 1, d);
    let q = plan.branching(level + 1);
    let mimo = unit_mimo(plan, rates, level, q - 1, d);
    let sub_units = plan.units_at(level + 1);
    let sub_size = plan.unit_sizes()[level + 1];
    let rate = rates.rate(level + 2);
    let relay = max_over(sub_units, || sum_over(q - 1, || d.max_of(sub_size - 1, rate)));
    inner + mimo + relay
}

fn phase_three<R: Rng + ?Sized>(plan: &CountPlan, rates: &LevelRates, level: usize, d: &mut Delays<'_, R>) -> f64 {
    if level == plan.depth() {
        let units = plan.units_at(level);
        let size = plan.unit_sizes()[level];
        let rate = rates.rate(level + 1);
        return max_over(units, || sum_over(size, || d.single(rate)));
    }
    if plan.branching(level + 1) == 1 {
        return phase_three(plan, rates, level + 1, d);
    }
    let form = phase_one(plan, rates, level + 1, d);
    let dests = plan.unit_sizes()[level + 1];
    let mimo = unit_mimo(plan, rates, level, dests, d);
    form + mimo + phase_three(plan, rates, level + 1, d)
}

/// MIMO among the subunits of every level-`level` unit in parallel: subunits
/// take turns, each reaching `dests` destinations through the fastest of
/// `sub_size²` links.
fn unit_mimo<R: Rng + ?Sized>(
    plan: &CountPlan,
    rates: &LevelRates,
    level: usize,
    dests: u64,
    d: &mut Delays<'_, R>,
) -> f64 {
    let q = plan.branching(level + 1);
    let sub_size = plan.unit_sizes()[level + 1];
    let link = (sub_size * sub_size) as f64 * rates.rate(level + 1);
    max_over(plan.units_at(level), || sum_over(q, || d.max_of(dests, link)))
}

/// Position-deterministic random stream for one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Samples `trials` i.i.d. sessions; trial `i` uses `trial_rng(seed, i)` so the
/// output does not depend on scheduling.
pub fn sample_sessions(
    plan: &CountPlan,
    rates: &LevelRates,
    variant: Variant,
    mode: DelayMode,
    trials: usize,
    seed: u64,
) -> Result<Vec<SessionSample>> {
    if variant == Variant::Bounded && plan.depth() > 1 {
        return Err(AoiError::Plan("bounded variant is defined for depth <= 1".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, i as u64);
            let mut delays = Delays::new(&mut rng, mode);
            simulate_session(plan, rates, variant, &mut delays)
        })
        .collect()
}

/// Empirical moments per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmpiricalPhases {
    pub phase1: RunningMoments,
    pub phase2: RunningMoments,
    pub phase3: RunningMoments,
    pub total: RunningMoments,
}

impl EmpiricalPhases {
    pub fn from_samples(samples: &[SessionSample]) -> Self {
        let mut acc = EmpiricalPhases::default();
        for s in samples {
            acc.phase1.push(s.phase1);
            acc.phase2.push(s.phase2);
            acc.phase3.push(s.phase3);
            acc.total.push(s.total);
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub trials: usize,
    pub seed: u64,
    pub variant: Variant,
    pub delays: DelayMode,
}

impl ExperimentOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        ExperimentOptions {
            trials,
            seed,
            variant: Variant::Exact,
            delays: DelayMode::Random,
        }
    }

    pub fn variant(self, variant: Variant) -> Self {
        ExperimentOptions { variant, ..self }
    }

    pub fn delays(self, delays: DelayMode) -> Self {
        ExperimentOptions { delays, ..self }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub plan: CountPlan,
    pub age: AgeEstimate,
    pub phases: EmpiricalPhases,
}

/// Simulates the configuration's rounded plan and measures the session-end
/// age on the resulting trace.
pub fn run_experiment(cfg: &HierarchyConfig, opts: ExperimentOptions) -> Result<ExperimentResult> {
    let plan = CountPlan::from_config(cfg)?;
    run_experiment_on_plan(&plan, cfg.rates(), opts)
}

pub fn run_experiment_on_plan(
    plan: &CountPlan,
    rates: &LevelRates,
    opts: ExperimentOptions,
) -> Result<ExperimentResult> {
    if opts.trials < MIN_TRIALS {
        return Err(AoiError::Trials {
            min: MIN_TRIALS,
            got: opts.trials,
        });
    }
    let samples = sample_sessions(plan, rates, opts.variant, opts.delays, opts.trials, opts.seed)?;
    let phases = EmpiricalPhases::from_samples(&samples);
    let trace = SessionTrace::new(samples.iter().map(|s| s.total).collect())?;
    let age = time_average_from_trace(&trace)?;
    Ok(ExperimentResult {
        plan: plan.clone(),
        age,
        phases,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ones() -> LevelRates {
        LevelRates::uniform(1.0).unwrap()
    }

    fn sample(plan: &CountPlan, variant: Variant, seed: u64) -> SessionSample {
        let mut rng = trial_rng(seed, 0);
        simulate_session(plan, &ones(), variant, &mut Delays::random(&mut rng)).unwrap()
    }

    #[test]
    fn samples_decompose() {
        let plan = CountPlan::two_level(7, 3, 4).unwrap();
        for seed in 0..50 {
            for v in [Variant::Exact, Variant::Bounded] {
                let s = sample(&plan, v, seed);
                assert_eq!(s.total, s.phase1 + s.phase2 + s.phase3);
                assert!(s.phase1 >= 0.0 && s.phase2 > 0.0 && s.phase3 > 0.0);
            }
        }
    }

    #[test]
    fn unit_plan_bounded_is_plain_exponentials() {
        // one node: phase I = three single draws, phase II and III likewise
        let plan = CountPlan::two_level(1, 1, 1).unwrap();
        let rates = LevelRates::new(vec![1.0, 2.0, 4.0]).unwrap();
        let mut rng = trial_rng(9, 0);
        let s = simulate_session_bounded(&plan, &rates, &mut Delays::random(&mut rng)).unwrap();
        let mut rng = trial_rng(9, 0);
        let mut e = |rate: f64| rng.sample::<f64, _>(Exp1) / rate;
        let p1 = e(4.0) + e(2.0) + e(4.0);
        let p2 = e(1.0);
        let p3 = e(4.0) + e(2.0) + e(4.0);
        assert_eq!((s.phase1, s.phase2, s.phase3), (p1, p2, p3));
    }

    #[test]
    fn unit_plan_exact_has_nothing_to_exchange() {
        let plan = CountPlan::two_level(1, 1, 1).unwrap();
        let s = sample(&plan, Variant::Exact, 3);
        assert_eq!(s.phase1, 0.0);
        assert!(s.phase3 > 0.0);
        let b = sample(&plan, Variant::Bounded, 3);
        assert!(s.phase1 <= b.phase1);
    }

    #[test]
    fn mean_mode_is_deterministic() {
        let plan = CountPlan::two_level(5, 2, 3).unwrap();
        let run = |seed| {
            let r = run_experiment_on_plan(
                &plan,
                &ones(),
                ExperimentOptions::new(200, seed).delays(DelayMode::Mean),
            )
            .unwrap();
            (r.age.mean_age, r.phases.total.mean())
        };
        let (age, mean) = run(1);
        assert_relative_eq!(age, 1.5 * mean, max_relative = 1e-12);
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn rejects_too_few_trials_and_deep_bounded() {
        let plan = CountPlan::two_level(5, 2, 3).unwrap();
        assert!(matches!(
            run_experiment_on_plan(&plan, &ones(), ExperimentOptions::new(99, 0)),
            Err(AoiError::Trials { .. })
        ));
        let deep = CountPlan::new(4, vec![8, 4, 2]).unwrap();
        assert!(sample_sessions(&deep, &ones(), Variant::Bounded, DelayMode::Random, 10, 0).is_err());
        assert!(recursive_phase1(3, &deep, &ones(), &mut Delays::random(&mut trial_rng(0, 0))).is_err());
    }

    #[test]
    fn streams_are_reproducible() {
        let plan = CountPlan::two_level(9, 3, 2).unwrap();
        let a = sample_sessions(&plan, &ones(), Variant::Exact, DelayMode::Random, 300, 42).unwrap();
        let b = sample_sessions(&plan, &ones(), Variant::Exact, DelayMode::Random, 300, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_sessions(&plan, &ones(), Variant::Exact, DelayMode::Random, 300, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn recursion_reproduces_direct_phase_one() {
        for plan in [
            CountPlan::two_level(6, 3, 4).unwrap(),
            CountPlan::two_level(2, 5, 2).unwrap(),
            CountPlan::two_level(3, 1, 4).unwrap(),
        ] {
            for seed in 0..20 {
                let mut rng = trial_rng(seed, 0);
                let direct = simulate_session_exact(&plan, &ones(), &mut Delays::random(&mut rng)).unwrap();
                let mut rng = trial_rng(seed, 0);
                let mut d = Delays::random(&mut rng);
                let p1 = recursive_phase1(0, &plan, &ones(), &mut d).unwrap();
                let p2 = cell_mimo(&plan, &ones(), &mut d);
                let p3 = recursive_phase3(0, &plan, &ones(), &mut d).unwrap();
                assert_eq!((direct.phase1, direct.phase2, direct.phase3), (p1, p2, p3));
            }
        }
    }

    #[test]
    fn recursion_base_case_is_flat_phase_one() {
        // level = depth on a two-level plan equals flat TDMA over the subcells
        let plan = CountPlan::two_level(4, 3, 5).unwrap();
        let flat = CountPlan::flat(12, 5).unwrap();
        let rates = LevelRates::new(vec![1.0, 2.0, 2.0]).unwrap();
        for seed in 0..10 {
            let mut rng = trial_rng(seed, 0);
            let base = recursive_phase1(1, &plan, &rates, &mut Delays::random(&mut rng)).unwrap();
            let mut rng = trial_rng(seed, 0);
            let f = simulate_session_exact(&flat, &rates, &mut Delays::random(&mut rng)).unwrap();
            assert_eq!(base, f.phase1);
        }
    }

    #[test]
    fn deep_tiny_plan_is_finite_and_replayable() {
        let plan = CountPlan::new(2, vec![8, 4, 2]).unwrap();
        let a = sample(&plan, Variant::Exact, 5);
        let b = sample(&plan, Variant::Exact, 5);
        assert_eq!(a, b);
        assert!(a.total.is_finite() && a.total > 0.0);
        assert!(a.phase1 > 0.0 && a.phase3 > 0.0);
    }

    #[test]
    fn doubling_rates_halves_every_duration() {
        let plan = CountPlan::two_level(40, 3, 3).unwrap();
        let fast = ones().scaled(2.0).unwrap();
        for v in [Variant::Exact, Variant::Bounded] {
            let a = sample_sessions(&plan, &ones(), v, DelayMode::Random, 200, 8).unwrap();
            let b = sample_sessions(&plan, &fast, v, DelayMode::Random, 200, 8).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert_eq!(x.total, 2.0 * y.total);
            }
        }
    }

    #[test]
    fn flat_plan_phase_two_mean() {
        let plan = CountPlan::flat(4, 4).unwrap();
        let s = sample_sessions(&plan, &ones(), Variant::Exact, DelayMode::Random, 100_000, 77).unwrap();
        let acc: RunningMoments = s.iter().map(|x| x.phase2).collect();
        assert!((acc.mean() - 25.0 / 48.0).abs() < 4.0 * acc.std_err(), "{}", acc.mean());
    }
}
