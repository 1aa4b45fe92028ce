//! Closed-form moments of the phase durations and the resulting average age.
//!
//! The session length under the bounded scheme is a sum of independent terms,
//! each a sum of `K` i.i.d. maxima of exponentials. With one hierarchy level
//! there are seven terms: three that form the cell's mega packet (TDMA inside
//! subcells, MIMO between subcells, relay inside subcells), the inter-cell
//! MIMO phase, and three that deliver packets (TDMA, MIMO, final relay).
//! Without hierarchy the first and last groups collapse to a single in-cell
//! TDMA term and a single in-cell relay term.
//!
//! Two evaluation modes are offered. [`MomentMode::LargeN`] uses real-valued
//! counts with `H_m ≈ ln m` and `G_m ≈ π²/6`; [`MomentMode::Exact`] rounds the
//! counts through [`CountPlan`] and uses exact harmonic sums, which makes it
//! the sharp reference for the simulator's bounded variant.

use crate::age::{average_age_formula, average_age_session_end, MomentPair};
use crate::error::{AoiError, Result};
use crate::hierarchy::{rounded_counts, CountPlan, HierarchyConfig, LevelRates};
use crate::order_stats::{harmonic, mean_max, variance_max, ZETA2};

/// One independent summand of the session length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    /// Flat scheme, phase I: in-cell TDMA.
    CellTdma,
    /// Phase I: TDMA inside subcells forming preliminary mega packets.
    FormTdma,
    /// Phase I: MIMO exchange of preliminary packets between subcells.
    FormMimo,
    /// Phase I: relay of received preliminary packets to the whole subcell.
    FormRelay,
    /// Phase II: inter-cell MIMO of mega packets.
    CellMimo,
    /// Phase III: TDMA inside subcells forming secondary mega packets.
    DeliverTdma,
    /// Phase III: MIMO of secondary packets to destination subcells.
    DeliverMimo,
    /// Phase III: relay to the destination node.
    DeliverRelay,
    /// Flat scheme, phase III: in-cell relay.
    CellRelay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    One,
    Two,
    Three,
}

impl Term {
    pub fn phase(self) -> Phase {
        match self {
            Term::CellTdma | Term::FormTdma | Term::FormMimo | Term::FormRelay => Phase::One,
            Term::CellMimo => Phase::Two,
            Term::DeliverTdma | Term::DeliverMimo | Term::DeliverRelay | Term::CellRelay => Phase::Three,
        }
    }
}

/// Moments of every independent term of a session.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMoments {
    terms: Vec<(Term, MomentPair)>,
}

impl PhaseMoments {
    fn from_terms(terms: Vec<(Term, MomentPair)>) -> Result<Self> {
        for (t, m) in &terms {
            MomentPair::new(m.mean, m.second_moment).map_err(|e| AoiError::Numeric(format!("{t:?}: {e}")))?;
        }
        Ok(PhaseMoments { terms })
    }

    pub fn terms(&self) -> &[(Term, MomentPair)] {
        &self.terms
    }

    pub fn term(&self, term: Term) -> Option<MomentPair> {
        self.terms.iter().find(|(t, _)| *t == term).map(|(_, m)| *m)
    }

    /// Moments of one phase, summing its independent terms.
    pub fn phase(&self, phase: Phase) -> MomentPair {
        self.terms
            .iter()
            .filter(|(t, _)| t.phase() == phase)
            .fold(MomentPair::zero(), |acc, (_, m)| acc.add_independent(*m))
    }

    /// Moments of the whole session,
    /// `E[(Σ T_i)²] = Σ E[T_i²] + 2 Σ_{i<j} E[T_i] E[T_j]`.
    pub fn total(&self) -> MomentPair {
        self.terms
            .iter()
            .fold(MomentPair::zero(), |acc, (_, m)| acc.add_independent(*m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentMode {
    /// Real-valued counts, `H_m → ln m`, `G_m → π²/6`.
    #[default]
    LargeN,
    /// Rounded counts with exact harmonic sums.
    Exact,
}

/// How the delivery delay `D` enters the age.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AgeConvention {
    /// `D = Y`: destinations refresh at session end.
    #[default]
    SessionEnd,
    /// A supplied `E[D]`.
    MeanDelay(f64),
}

fn require_shallow(cfg: &HierarchyConfig) -> Result<()> {
    if cfg.h() > 1 {
        return Err(AoiError::Config(format!(
            "closed-form phase moments exist for h <= 1, got h = {}",
            cfg.h()
        )));
    }
    Ok(())
}

/// Phase moments in the requested mode.
pub fn phase_moments(cfg: &HierarchyConfig, mode: MomentMode) -> Result<PhaseMoments> {
    match mode {
        MomentMode::LargeN => phase_moments_approx(cfg),
        MomentMode::Exact => {
            require_shallow(cfg)?;
            phase_moments_exact(&CountPlan::from_config(cfg)?, cfg.rates())
        }
    }
}

/// Large-`n` moments, `L = ln n`, `ζ = π²/6`.
///
/// Depth 1:
///
/// | term          | mean                         | second moment                                      |
/// |---------------|------------------------------|----------------------------------------------------|
/// | FormTdma      | `n^a L/λ2`                   | `n^a ζ/λ2² + n^{2a} L²/λ2²`                         |
/// | FormMimo      | `(1-a) n^{b-3a} L/λ1`        | `n^{b-5a} ζ/λ1² + (1-a)² n^{2(b-3a)} L²/λ1²`        |
/// | FormRelay     | `n^{b-a} L/λ2`               | `n^{b-a} ζ/λ2² + n^{2(b-a)} L²/λ2²`                 |
/// | CellMimo      | `b n^{1-3b} L/λ0`            | `n^{1-5b} ζ/λ0² + b² n^{2(1-3b)} L²/λ0²`            |
/// | DeliverTdma   | as FormTdma                  | as FormTdma                                        |
/// | DeliverMimo   | `(1-b+a) n^{b-3a} L/λ1`      | `n^{b-5a} ζ/λ1² + (1-b+a)² n^{2(b-3a)} L²/λ1²`      |
/// | DeliverRelay  | `(1-a) n^a L/λ2`             | `n^a ζ/λ2² + (1-a)² n^{2a} L²/λ2²`                  |
///
/// Depth 0 keeps CellMimo and uses `n^b L/λ1` (CellTdma) and
/// `(1-b) n^b L/λ1` (CellRelay) with the matching second moments.
pub fn phase_moments_approx(cfg: &HierarchyConfig) -> Result<PhaseMoments> {
    require_shallow(cfg)?;
    let n = cfg.n();
    let l = n.ln();
    let b = cfg.b();
    let rates = cfg.rates();
    let p = |e: f64| n.powf(e);
    // K copies of a max whose mean is c·L/λ and whose variance sums to var_count·ζ/λ²
    let term = |mean_count: f64, coeff: f64, var_count: f64, rate: f64| MomentPair {
        mean: coeff * mean_count * l / rate,
        second_moment: var_count * ZETA2 / (rate * rate) + (coeff * mean_count * l / rate).powi(2),
    };
    let l0 = rates.rate(0);
    let cell_mimo = term(p(1.0 - 3.0 * b), b, p(1.0 - 5.0 * b), l0);
    let terms = match cfg.a() {
        None => {
            let l1 = rates.rate(1);
            vec![
                (Term::CellTdma, term(p(b), 1.0, p(b), l1)),
                (Term::CellMimo, cell_mimo),
                (Term::CellRelay, term(p(b), 1.0 - b, p(b), l1)),
            ]
        }
        Some(a) => {
            let (l1, l2) = (rates.rate(1), rates.rate(2));
            vec![
                (Term::FormTdma, term(p(a), 1.0, p(a), l2)),
                (Term::FormMimo, term(p(b - 3.0 * a), 1.0 - a, p(b - 5.0 * a), l1)),
                (Term::FormRelay, term(p(b - a), 1.0, p(b - a), l2)),
                (Term::CellMimo, cell_mimo),
                (Term::DeliverTdma, term(p(a), 1.0, p(a), l2)),
                (Term::DeliverMimo, term(p(b - 3.0 * a), 1.0 - b + a, p(b - 5.0 * a), l1)),
                (Term::DeliverRelay, term(p(a), 1.0 - a, p(a), l2)),
            ]
        }
    };
    PhaseMoments::from_terms(terms)
}

/// Grouped large-`n` mean of the phase I terms,
/// `((n^a + n^{b-a}) / λ2 + (1-a) n^{b-3a} / λ1) ln n`.
pub fn phase_one_mean_grouped(cfg: &HierarchyConfig) -> Result<f64> {
    let a = one_level_a(cfg)?;
    let (n, b, r) = (cfg.n(), cfg.b(), cfg.rates());
    Ok(((n.powf(a) + n.powf(b - a)) / r.rate(2) + (1.0 - a) * n.powf(b - 3.0 * a) / r.rate(1)) * n.ln())
}

/// Grouped large-`n` mean of the phase III terms,
/// `((2-a) n^a / λ2 + (1-b+a) n^{b-3a} / λ1) ln n`.
pub fn phase_three_mean_grouped(cfg: &HierarchyConfig) -> Result<f64> {
    let a = one_level_a(cfg)?;
    let (n, b, r) = (cfg.n(), cfg.b(), cfg.rates());
    Ok(((2.0 - a) * n.powf(a) / r.rate(2) + (1.0 - b + a) * n.powf(b - 3.0 * a) / r.rate(1)) * n.ln())
}

fn one_level_a(cfg: &HierarchyConfig) -> Result<f64> {
    match (cfg.h(), cfg.a()) {
        (1, Some(a)) => Ok(a),
        _ => Err(AoiError::Config("grouped sums are defined for h = 1".into())),
    }
}

/// `count` i.i.d. copies of the maximum of `m` draws of `Exp(rate)`.
fn sum_of_maxima(count: u64, m: u64, rate: f64) -> MomentPair {
    MomentPair::iid_sum(count, mean_max(m, rate), variance_max(m, rate))
}

/// Exact moments of the bounded scheme on integer counts.
///
/// With `s` nodes per subcell, `q` subcells per cell, `M = qs`, `C` cells,
/// `N = CM` nodes and `T = Cq` subcells, depth 1 gives
///
/// * FormTdma: `s` maxima of `N` draws at `λ2`
/// * FormMimo: `q` maxima of `T` draws at `s²λ1` (each a minimum over `s²` links)
/// * FormRelay: `q` maxima of `N` draws at `λ2`
/// * CellMimo: `C` maxima of `M` draws at `M²λ0`
/// * DeliverTdma: `s` maxima of `N` draws at `λ2`
/// * DeliverMimo: `q` maxima of `Cs` draws at `s²λ1`
/// * DeliverRelay: `s` maxima of `T` draws at `λ2`
///
/// and depth 0 gives CellTdma (`M` maxima of `N` at `λ1`), CellMimo, and
/// CellRelay (`M` maxima of `C` at `λ1`).
pub fn phase_moments_exact(plan: &CountPlan, rates: &LevelRates) -> Result<PhaseMoments> {
    let c = plan.cells();
    let m = plan.nodes_per_cell();
    let total = plan.total_nodes();
    let mf = m as f64;
    let cell_mimo = sum_of_maxima(c, m, mf * mf * rates.rate(0));
    let terms = match plan.depth() {
        0 => {
            let l1 = rates.rate(1);
            vec![
                (Term::CellTdma, sum_of_maxima(m, total, l1)),
                (Term::CellMimo, cell_mimo),
                (Term::CellRelay, sum_of_maxima(m, c, l1)),
            ]
        }
        1 => {
            let s = plan.nodes_per_subcell();
            let q = plan.subcells_per_cell();
            let subcells = plan.units_at(1);
            let (l1, l2) = (rates.rate(1), rates.rate(2));
            let link = (s * s) as f64 * l1;
            vec![
                (Term::FormTdma, sum_of_maxima(s, total, l2)),
                (Term::FormMimo, sum_of_maxima(q, subcells, link)),
                (Term::FormRelay, sum_of_maxima(q, total, l2)),
                (Term::CellMimo, cell_mimo),
                (Term::DeliverTdma, sum_of_maxima(s, total, l2)),
                (Term::DeliverMimo, sum_of_maxima(q, c * s, link)),
                (Term::DeliverRelay, sum_of_maxima(s, subcells, l2)),
            ]
        }
        d => {
            return Err(AoiError::Config(format!(
                "closed-form phase moments exist for depth <= 1, got {d}"
            )))
        }
    };
    PhaseMoments::from_terms(terms)
}

/// Exact mean of the inter-cell MIMO phase on rounded counts,
/// `C · H_M / (λ0 M²)`: each of `M` destination cells is reached after the
/// minimum of `M²` links, the cell waits for the slowest, and cells take turns.
///
/// Counts are rounded as in [`CountPlan::from_config`] but kept real-valued,
/// so astronomically large `n` stays usable.
pub fn exact_mimo_phase_mean(cfg: &HierarchyConfig) -> Result<f64> {
    let (cells, sizes) = rounded_counts(cfg);
    let m = sizes[0];
    if m > u64::MAX as f64 {
        return Err(AoiError::Numeric(format!("cell size {m} out of range")));
    }
    Ok(cells * harmonic(m as u64) / (cfg.rates().rate(0) * m * m))
}

pub fn exact_mimo_mean_for_plan(plan: &CountPlan, rate0: f64) -> f64 {
    let m = plan.nodes_per_cell() as f64;
    plan.cells() as f64 * harmonic(plan.nodes_per_cell()) / (rate0 * m * m)
}

/// Average age from phase moments under the given convention.
pub fn age_from_moments(moments: &PhaseMoments, convention: AgeConvention) -> Result<f64> {
    let y = moments.total();
    let age = match convention {
        AgeConvention::SessionEnd => average_age_session_end(y)?,
        AgeConvention::MeanDelay(d) => average_age_formula(y, d)?,
    };
    if age.is_finite() {
        Ok(age)
    } else {
        Err(AoiError::Numeric(format!("non-finite age for session moments {y:?}")))
    }
}

/// Average age `E[Y] + E[Y²] / (2 E[Y])` of the bounded scheme.
pub fn average_age_analytic(cfg: &HierarchyConfig, mode: MomentMode, convention: AgeConvention) -> Result<f64> {
    age_from_moments(&phase_moments(cfg, mode)?, convention)
}
