//! Hierarchy configuration, integer count plans and exponent selection.
//!
//! A network of `n` nodes is split into `n^{1-b}` cells of `n^b` nodes. With
//! `h` levels of hierarchy every cell is recursively split again; the unit
//! sizes follow an exponent schedule `e_0 = b > e_1 = a > … > e_h`, a level-`ℓ`
//! unit holding `n^{e_ℓ}` nodes.

use num_rational::Ratio;

use crate::analytic::{average_age_analytic, AgeConvention, MomentMode};
use crate::error::{check_rate, AoiError, Result};

/// Exponential link-delay rates per hierarchy depth.
///
/// `rate(0)` governs inter-cell links, `rate(ℓ)` links between different
/// level-`ℓ` units inside one level-`ℓ-1` unit, and `rate(h+1)` links inside
/// the innermost units. Depths past the end of the list reuse the last rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRates(Vec<f64>);

impl LevelRates {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(AoiError::Config("at least one rate required".into()));
        }
        for &r in &rates {
            check_rate(r)?;
        }
        Ok(LevelRates(rates))
    }

    /// The same rate at every depth.
    pub fn uniform(rate: f64) -> Result<Self> {
        Self::new(vec![rate])
    }

    pub fn rate(&self, depth: usize) -> f64 {
        self.0[depth.min(self.0.len() - 1)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Every rate multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|r| r * factor).collect())
    }
}

/// Network size, depth, exponent schedule and link rates.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    n: f64,
    schedule: Vec<f64>,
    rates: LevelRates,
}

impl HierarchyConfig {
    /// `schedule[ℓ]` is the exponent of the level-`ℓ` unit size; its length is
    /// `h + 1`.
    pub fn new(n: f64, schedule: Vec<f64>, rates: LevelRates) -> Result<Self> {
        if !(n >= 2.0 && n.is_finite()) {
            return Err(AoiError::Config(format!("network size must be at least 2, got {n}")));
        }
        if schedule.is_empty() {
            return Err(AoiError::Config("exponent schedule is empty".into()));
        }
        if !(schedule[0] > 0.0 && schedule[0] <= 1.0) {
            return Err(AoiError::Config(format!(
                "cell exponent b={} outside (0, 1]",
                schedule[0]
            )));
        }
        for w in schedule.windows(2) {
            if !(w[1] > 0.0 && w[1] < w[0]) {
                return Err(AoiError::Config(format!(
                    "exponents must decrease and stay positive: {schedule:?}"
                )));
            }
        }
        Ok(HierarchyConfig { n, schedule, rates })
    }

    /// No hierarchy: cells of `n^b` nodes.
    pub fn flat(n: f64, b: f64, rates: LevelRates) -> Result<Self> {
        Self::new(n, vec![b], rates)
    }

    /// One level: cells of `n^b` nodes split into subcells of `n^a` nodes.
    pub fn one_level(n: f64, a: f64, b: f64, rates: LevelRates) -> Result<Self> {
        Self::new(n, vec![b, a], rates)
    }

    /// Depth `h` with the exponent-balanced schedule `b/2^ℓ`.
    pub fn optimal(n: f64, h: u32, rates: LevelRates) -> Result<Self> {
        let schedule = general_h_exponent_schedule(h)?.iter().map(ratio_to_f64).collect();
        Self::new(n, schedule, rates)
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn h(&self) -> u32 {
        (self.schedule.len() - 1) as u32
    }

    pub fn b(&self) -> f64 {
        self.schedule[0]
    }

    /// Subcell exponent, absent without hierarchy.
    pub fn a(&self) -> Option<f64> {
        self.schedule.get(1).copied()
    }

    pub fn schedule(&self) -> &[f64] {
        &self.schedule
    }

    pub fn rates(&self) -> &LevelRates {
        &self.rates
    }

    pub fn with_n(&self, n: f64) -> Result<Self> {
        Self::new(n, self.schedule.clone(), self.rates.clone())
    }

    pub fn with_rates(&self, rates: LevelRates) -> Self {
        HierarchyConfig { rates, ..self.clone() }
    }
}

/// Integer unit counts used by the simulator and by the exact analytic mode.
///
/// `unit_sizes[0]` is the number of nodes per cell and `unit_sizes[ℓ]` the
/// number per level-`ℓ` unit; each size is an exact multiple of the next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountPlan {
    cells: u64,
    unit_sizes: Vec<u64>,
}

impl CountPlan {
    pub fn new(cells: u64, unit_sizes: Vec<u64>) -> Result<Self> {
        if cells == 0 || unit_sizes.is_empty() || unit_sizes.contains(&0) {
            return Err(AoiError::Plan(format!(
                "all counts must be at least 1: cells={cells}, units={unit_sizes:?}"
            )));
        }
        for w in unit_sizes.windows(2) {
            if w[0] % w[1] != 0 {
                return Err(AoiError::Plan(format!("unit sizes must nest: {unit_sizes:?}")));
            }
        }
        Ok(CountPlan { cells, unit_sizes })
    }

    /// Depth-0 plan.
    pub fn flat(cells: u64, nodes_per_cell: u64) -> Result<Self> {
        Self::new(cells, vec![nodes_per_cell])
    }

    /// Depth-1 plan.
    pub fn two_level(cells: u64, subcells_per_cell: u64, nodes_per_subcell: u64) -> Result<Self> {
        Self::new(cells, vec![subcells_per_cell * nodes_per_subcell, nodes_per_subcell])
    }

    /// Rounds the configuration's real-valued counts.
    ///
    /// The innermost size is `round(n^{e_h})`, each branching factor is
    /// `round(n^{e_{ℓ-1} - e_ℓ})`, outer sizes are products of those, and the
    /// cell count is `round(n / nodes_per_cell)`; every count is at least one.
    /// Fails when a count leaves the exactly representable integer range.
    pub fn from_config(cfg: &HierarchyConfig) -> Result<Self> {
        let (cells, sizes) = rounded_counts(cfg);
        let too_big = |x: f64| x > MAX_COUNT;
        if too_big(cells) || sizes.iter().copied().any(too_big) || too_big(cells * sizes[0]) {
            return Err(AoiError::Numeric(format!("counts exceed 2^53 for n = {}", cfg.n())));
        }
        Ok(CountPlan {
            cells: cells as u64,
            unit_sizes: sizes.iter().map(|&x| x as u64).collect(),
        })
    }

    pub fn depth(&self) -> usize {
        self.unit_sizes.len() - 1
    }

    pub fn cells(&self) -> u64 {
        self.cells
    }

    pub fn unit_sizes(&self) -> &[u64] {
        &self.unit_sizes
    }

    pub fn nodes_per_cell(&self) -> u64 {
        self.unit_sizes[0]
    }

    /// Subcells per cell; 1 without hierarchy.
    pub fn subcells_per_cell(&self) -> u64 {
        self.branching(1)
    }

    /// Nodes per first-level subcell; equals the cell size without hierarchy.
    pub fn nodes_per_subcell(&self) -> u64 {
        self.unit_sizes[1.min(self.depth())]
    }

    /// Number of level-`level` units inside one level-`level-1` unit.
    pub fn branching(&self, level: usize) -> u64 {
        if level == 0 || level > self.depth() {
            1
        } else {
            self.unit_sizes[level - 1] / self.unit_sizes[level]
        }
    }

    /// Level-`level` units in the whole network.
    pub fn units_at(&self, level: usize) -> u64 {
        self.cells * (self.unit_sizes[0] / self.unit_sizes[level])
    }

    /// Node count after rounding.
    pub fn total_nodes(&self) -> u64 {
        self.cells * self.unit_sizes[0]
    }
}

/// Counts above `2^53` are not exactly representable in `f64`.
const MAX_COUNT: f64 = 9_007_199_254_740_992.0;

/// Real-valued version of the [`CountPlan::from_config`] rounding:
/// `(cells, unit_sizes)`.
pub fn rounded_counts(cfg: &HierarchyConfig) -> (f64, Vec<f64>) {
    let n = cfg.n();
    let e = cfg.schedule();
    let h = e.len() - 1;
    let round = |x: f64| x.round().max(1.0);
    let mut sizes = vec![0.0; h + 1];
    sizes[h] = round(n.powf(e[h]));
    for l in (1..=h).rev() {
        sizes[l - 1] = round(n.powf(e[l - 1] - e[l])) * sizes[l];
    }
    (round(n / sizes[0]), sizes)
}

/// Largest depth whose `3·2^h + 1` fits the rational representation.
pub const MAX_EXACT_DEPTH: u32 = 61;

fn balance_denominator(h: u32) -> Result<u64> {
    if h > MAX_EXACT_DEPTH {
        return Err(AoiError::Config(format!("depth {h} exceeds {MAX_EXACT_DEPTH}")));
    }
    Ok(3 * (1u64 << h) + 1)
}

/// `α(h) = 1 / (3·2^h + 1)`.
pub fn alpha(h: u32) -> Result<Ratio<u64>> {
    Ok(Ratio::new(1, balance_denominator(h)?))
}

pub fn alpha_f64(h: u32) -> Result<f64> {
    alpha(h).map(|r| ratio_to_f64(&r))
}

pub fn ratio_to_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Exponent-balanced schedule `e_ℓ = 2^{h-ℓ} / (3·2^h + 1)`, `ℓ = 0..=h`.
///
/// The top exponent solves `b / 2^h = 1 - 3b` and each level halves it, so
/// `e_h = α(h) = 1 - 3 e_0`.
pub fn general_h_exponent_schedule(h: u32) -> Result<Vec<Ratio<u64>>> {
    let den = balance_denominator(h)?;
    Ok((0..=h).map(|l| Ratio::new(1u64 << (h - l), den)).collect())
}

/// Largest growth exponent among the phase durations for a schedule.
///
/// Terms: `1 - 3e_0` for inter-cell MIMO, and per level `ℓ ≥ 1` the
/// inter-unit MIMO `e_{ℓ-1} - 3e_ℓ` and relay `e_{ℓ-1} - e_ℓ`, plus `e_h` for
/// the innermost TDMA. For `h = 1` this is `max(a, b-a, b-3a, 1-3b)`.
pub fn dominant_exponent(schedule: &[f64]) -> f64 {
    let mut worst = 1.0 - 3.0 * schedule[0];
    for w in schedule.windows(2) {
        worst = worst.max(w[0] - 3.0 * w[1]).max(w[0] - w[1]);
    }
    worst.max(*schedule.last().expect("nonempty schedule"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeMode {
    /// Ternary search over `(a, b)` on the dominant exponent; `h ≤ 1`.
    Search,
    /// Innermost size balanced against inter-cell MIMO,
    /// `e_h = 1 - 3e_0`, with `e_ℓ = 2e_{ℓ+1}`; any depth.
    Balance,
    /// Bisection on the worst term of [`dominant_exponent`]; any depth.
    MinMax,
}

/// Optimal exponent schedule and its growth exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentOptimum {
    pub schedule: Vec<f64>,
    /// Value of the mode's objective at the returned schedule.
    pub exponent: f64,
    /// [`dominant_exponent`] of the schedule. Equals `exponent` except in
    /// balance mode at `h ≥ 2`, where the per-level relay terms exceed the
    /// balanced value.
    pub worst_term: f64,
    /// Large-`n` analytic age at the optimum, when a size was supplied and
    /// `h ≤ 1`.
    pub predicted_age: Option<f64>,
}

impl ExponentOptimum {
    pub fn b(&self) -> f64 {
        self.schedule[0]
    }

    pub fn a(&self) -> Option<f64> {
        self.schedule.get(1).copied()
    }
}

/// Minimizes the dominant growth exponent at depth `h`.
///
/// The exponents do not depend on the rates; `rates` (and `n`, if given) are
/// used only for the predicted age at the optimum.
pub fn optimize_exponents(h: u32, n: Option<f64>, rates: &LevelRates) -> Result<ExponentOptimum> {
    let mode = if h <= 1 {
        OptimizeMode::Search
    } else {
        OptimizeMode::Balance
    };
    optimize_exponents_with(h, n, rates, mode)
}

pub fn optimize_exponents_with(
    h: u32,
    n: Option<f64>,
    rates: &LevelRates,
    mode: OptimizeMode,
) -> Result<ExponentOptimum> {
    balance_denominator(h)?;
    let schedule = match (mode, h) {
        (OptimizeMode::Search, 0) => vec![ternary_min(0.0, 1.0, |b| dominant_exponent(&[b]))],
        (OptimizeMode::Search, 1) => {
            let inner = |b: f64| ternary_min(0.0, b, |a| dominant_exponent(&[b, a]));
            let b = ternary_min(0.0, 1.0, |b| dominant_exponent(&[b, inner(b)]));
            vec![b, inner(b)]
        }
        (OptimizeMode::Search, _) => {
            return Err(AoiError::Config("search mode supports h <= 1; use balance mode".into()))
        }
        (OptimizeMode::Balance, h) => general_h_exponent_schedule(h)?.iter().map(ratio_to_f64).collect(),
        (OptimizeMode::MinMax, h) => balanced_schedule(h as usize),
    };
    let worst_term = dominant_exponent(&schedule);
    let exponent = match mode {
        OptimizeMode::Balance => alpha_f64(h)?,
        _ => worst_term,
    };
    let predicted_age = match n {
        Some(n) if h <= 1 => {
            let cfg = HierarchyConfig::new(n, schedule.clone(), rates.clone())?;
            Some(average_age_analytic(
                &cfg,
                MomentMode::LargeN,
                AgeConvention::SessionEnd,
            )?)
        }
        _ => None,
    };
    Ok(ExponentOptimum {
        schedule,
        exponent,
        worst_term,
        predicted_age,
    })
}

fn ternary_min(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) <= f(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    0.5 * (lo + hi)
}

/// Greedy feasibility: the smallest schedule meeting every term `≤ t`.
fn greedy_schedule(h: usize, t: f64) -> Option<Vec<f64>> {
    let mut e = Vec::with_capacity(h + 1);
    let top = (1.0 - t) / 3.0;
    if !(top > 0.0 && top <= 1.0) {
        return None;
    }
    e.push(top);
    for l in 1..=h {
        let prev = e[l - 1];
        let next = if prev - t > 0.0 { prev - t } else { prev / 2.0 };
        e.push(next);
    }
    (e[h] <= t).then_some(e)
}

fn balanced_schedule(h: usize) -> Vec<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if greedy_schedule(h, mid).is_some() {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    greedy_schedule(h, hi).expect("upper bracket is feasible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ones() -> LevelRates {
        LevelRates::uniform(1.0).unwrap()
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(0).unwrap(), Ratio::new(1, 4));
        assert_eq!(alpha(1).unwrap(), Ratio::new(1, 7));
        assert_eq!(alpha(2).unwrap(), Ratio::new(1, 13));
        assert!(alpha(MAX_EXACT_DEPTH + 1).is_err());
    }

    #[test]
    fn alpha_matches_recursion() {
        // b / 2^h = 1 - 3b  =>  α = b / 2^h
        for h in 0..=20u32 {
            let b = Ratio::new(1u64 << h, 3 * (1u64 << h) + 1);
            assert_eq!(alpha(h).unwrap(), b / Ratio::from_integer(1u64 << h));
            assert!(alpha(h + 1).unwrap() < alpha(h).unwrap());
        }
    }

    #[test]
    fn schedule_examples() {
        let r = |n, d| Ratio::new(n, d);
        assert_eq!(general_h_exponent_schedule(0).unwrap(), vec![r(1, 4)]);
        assert_eq!(general_h_exponent_schedule(1).unwrap(), vec![r(2, 7), r(1, 7)]);
        assert_eq!(
            general_h_exponent_schedule(2).unwrap(),
            vec![r(4, 13), r(2, 13), r(1, 13)]
        );
    }

    #[test]
    fn schedule_balances_for_every_depth() {
        for h in 0..=20u32 {
            let s = general_h_exponent_schedule(h).unwrap();
            let one = Ratio::from_integer(1u64);
            let three = Ratio::from_integer(3u64);
            assert_eq!(s[h as usize], alpha(h).unwrap());
            assert_eq!(one - three * s[0], alpha(h).unwrap());
        }
    }

    #[test]
    fn search_optimum_h1_and_h0() {
        let opt = optimize_exponents(1, None, &ones()).unwrap();
        assert_abs_diff_eq!(opt.b(), 2.0 / 7.0, epsilon = 1e-6);
        assert_abs_diff_eq!(opt.a().unwrap(), 1.0 / 7.0, epsilon = 1e-6);
        assert_abs_diff_eq!(opt.exponent, 1.0 / 7.0, epsilon = 1e-6);

        let opt = optimize_exponents(0, None, &ones()).unwrap();
        assert_abs_diff_eq!(opt.b(), 0.25, epsilon = 1e-6);
        assert_abs_diff_eq!(opt.exponent, 0.25, epsilon = 1e-6);
        assert!(opt.a().is_none());
    }

    #[test]
    fn shallow_modes_agree() {
        for h in 0..=1 {
            let s = optimize_exponents_with(h, None, &ones(), OptimizeMode::Search).unwrap();
            for mode in [OptimizeMode::Balance, OptimizeMode::MinMax] {
                let o = optimize_exponents_with(h, None, &ones(), mode).unwrap();
                assert_abs_diff_eq!(s.exponent, o.exponent, epsilon = 1e-6);
                assert_abs_diff_eq!(o.exponent, o.worst_term, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn balance_mode_returns_closed_form_schedule() {
        for h in 0..=10 {
            let opt = optimize_exponents(h, None, &ones()).unwrap();
            assert_abs_diff_eq!(opt.exponent, alpha_f64(h).unwrap(), epsilon = 1e-9);
            let exact = general_h_exponent_schedule(h).unwrap();
            for (got, want) in opt.schedule.iter().zip(&exact) {
                assert_abs_diff_eq!(*got, ratio_to_f64(want), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn deeper_relays_exceed_balanced_exponent() {
        // h = 2: schedule (4, 2, 1)/13 leaves the top relay at 2/13
        let bal = optimize_exponents_with(2, None, &ones(), OptimizeMode::Balance).unwrap();
        assert_abs_diff_eq!(bal.worst_term, 2.0 / 13.0, epsilon = 1e-12);
        let mm = optimize_exponents_with(2, None, &ones(), OptimizeMode::MinMax).unwrap();
        assert_abs_diff_eq!(mm.exponent, 0.1, epsilon = 1e-9);
        for h in 2..=8 {
            let bal = optimize_exponents_with(h, None, &ones(), OptimizeMode::Balance).unwrap();
            let mm = optimize_exponents_with(h, None, &ones(), OptimizeMode::MinMax).unwrap();
            assert!(mm.exponent <= bal.worst_term + 1e-12);
            assert!(mm.exponent > bal.exponent);
        }
    }

    #[test]
    fn predicted_age_reported_for_shallow_depths() {
        let opt = optimize_exponents(1, Some(1e6), &ones()).unwrap();
        assert!(opt.predicted_age.unwrap() > 0.0);
        assert!(optimize_exponents(2, Some(1e6), &ones())
            .unwrap()
            .predicted_age
            .is_none());
    }

    #[test]
    fn config_validation() {
        assert!(HierarchyConfig::one_level(1e4, 0.3, 0.2, ones()).is_err());
        assert!(HierarchyConfig::flat(1e4, 1.5, ones()).is_err());
        assert!(HierarchyConfig::flat(1.0, 0.5, ones()).is_err());
        assert!(LevelRates::new(vec![1.0, -1.0]).is_err());
        assert!(HierarchyConfig::one_level(1e4, 1.0 / 7.0, 2.0 / 7.0, ones()).is_ok());
    }

    #[test]
    fn plan_rounding_reconciles_products() {
        let cfg = HierarchyConfig::one_level(4096.0, 1.0 / 7.0, 2.0 / 7.0, ones()).unwrap();
        let plan = CountPlan::from_config(&cfg).unwrap();
        assert_eq!(plan.nodes_per_subcell(), 3);
        assert_eq!(plan.subcells_per_cell(), 3);
        assert_eq!(plan.nodes_per_cell(), 9);
        assert_eq!(plan.cells(), 455);

        let cfg = HierarchyConfig::flat(16.0, 0.5, ones()).unwrap();
        let plan = CountPlan::from_config(&cfg).unwrap();
        assert_eq!(
            (plan.cells(), plan.nodes_per_cell(), plan.subcells_per_cell()),
            (4, 4, 1)
        );

        let cfg = HierarchyConfig::optimal(16384.0, 1, ones()).unwrap();
        let plan = CountPlan::from_config(&cfg).unwrap();
        assert_eq!(plan.unit_sizes(), &[16, 4]);
        assert_eq!(plan.cells(), 1024);
        assert_eq!(plan.units_at(1), 4096);
    }

    #[test]
    fn plan_rejects_overflowing_counts() {
        let cfg = HierarchyConfig::flat(1e40, 0.25, ones()).unwrap();
        assert!(matches!(CountPlan::from_config(&cfg), Err(AoiError::Numeric(_))));
        let (cells, sizes) = rounded_counts(&cfg);
        assert_eq!(sizes[0], 1e10);
        assert_eq!(cells, 1e30);
    }

    #[test]
    fn plan_rejects_bad_counts() {
        assert!(CountPlan::new(0, vec![4]).is_err());
        assert!(CountPlan::new(2, vec![4, 3]).is_err());
        assert!(CountPlan::new(2, vec![4, 0]).is_err());
    }
}
