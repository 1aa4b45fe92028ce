use aoi_core::age::{average_age_session_end, time_average_from_trace, MomentPair, SessionTrace};
use aoi_core::analytic::{average_age_analytic, phase_moments, phase_moments_exact, AgeConvention, MomentMode};
use aoi_core::geometry::random_derangement;
use aoi_core::hierarchy::{CountPlan, HierarchyConfig, LevelRates};
use aoi_core::order_stats::OrderStatSpec;
use aoi_core::sim::{sample_sessions, trial_rng, DelayMode, Variant};
use aoi_core::stats::RunningMoments;
use proptest::prelude::*;

proptest! {
    #[test]
    fn order_stat_mean_grows_with_rank(n in 1u64..2000, rate in 0.01f64..100.0) {
        let mut prev = 0.0;
        for k in (1..=n).step_by((n as usize / 17).max(1)) {
            let m = OrderStatSpec::new(k, n, rate).unwrap().mean();
            prop_assert!(m > prev);
            prev = m;
        }
    }

    #[test]
    fn order_stat_scales_inversely_with_rate(k in 1u64..50, extra in 0u64..50, rate in 0.01f64..100.0, c in 0.1f64..10.0) {
        let n = k + extra;
        let a = OrderStatSpec::new(k, n, rate).unwrap();
        let b = OrderStatSpec::new(k, n, rate * c).unwrap();
        prop_assert!((a.mean() / b.mean() - c).abs() <= 1e-12 * c);
        prop_assert!((a.variance() / b.variance() - c * c).abs() <= 1e-11 * c * c);
    }

    #[test]
    fn age_is_at_least_one_and_a_half_mean(mean in 0.01f64..100.0, cv2 in 0.0f64..10.0) {
        let y = MomentPair::new(mean, mean * mean * (1.0 + cv2)).unwrap();
        prop_assert!(average_age_session_end(y).unwrap() >= 1.5 * mean * (1.0 - 1e-12));
    }

    #[test]
    fn analytic_age_scales_with_rates(e in 6i32..12, c in 0.1f64..10.0) {
        let n = 10f64.powi(e);
        let base = HierarchyConfig::optimal(n, 1, LevelRates::uniform(1.0).unwrap()).unwrap();
        let fast = base.with_rates(LevelRates::uniform(c).unwrap());
        for mode in [MomentMode::LargeN, MomentMode::Exact] {
            let a = average_age_analytic(&base, mode, AgeConvention::SessionEnd).unwrap();
            let b = average_age_analytic(&fast, mode, AgeConvention::SessionEnd).unwrap();
            prop_assert!((a / b - c).abs() <= 1e-9 * c);
        }
    }

    #[test]
    fn phase_totals_add_up(e in 3i32..9) {
        let cfg = HierarchyConfig::optimal(10f64.powi(e), 1, LevelRates::uniform(1.0).unwrap()).unwrap();
        for mode in [MomentMode::LargeN, MomentMode::Exact] {
            let pm = phase_moments(&cfg, mode).unwrap();
            let sum: f64 = pm.terms().iter().map(|(_, m)| m.mean).sum();
            prop_assert!((pm.total().mean - sum).abs() <= 1e-9 * sum);
        }
    }
}

#[test]
fn derangements_never_fix_a_point() {
    for seed in 0..10_000u64 {
        let n = 2 + (seed % 50) as usize;
        let p = random_derangement(n, &mut trial_rng(seed, 0));
        assert!(p.iter().enumerate().all(|(i, &d)| i != d));
    }
}

#[test]
fn bounded_simulation_matches_closed_form_moments() {
    let rates = LevelRates::new(vec![1.0, 0.5, 2.0]).unwrap();
    let plan = CountPlan::two_level(20, 3, 4).unwrap();
    let pm = phase_moments_exact(&plan, &rates).unwrap().total();
    let s = sample_sessions(&plan, &rates, Variant::Bounded, DelayMode::Random, 50_000, 11).unwrap();
    let acc: RunningMoments = s.iter().map(|x| x.total).collect();
    assert!((acc.mean() - pm.mean).abs() <= 4.0 * acc.std_err());
    let var = pm.second_moment - pm.mean * pm.mean;
    assert!((acc.variance() / var - 1.0).abs() < 0.05);
}

#[test]
fn bounded_dominates_exact_on_small_plans() {
    let rates = LevelRates::uniform(1.0).unwrap();
    for plan in [CountPlan::two_level(30, 2, 3).unwrap(), CountPlan::flat(12, 6).unwrap()] {
        let e = sample_sessions(&plan, &rates, Variant::Exact, DelayMode::Random, 20_000, 3).unwrap();
        let b = sample_sessions(&plan, &rates, Variant::Bounded, DelayMode::Random, 20_000, 3).unwrap();
        let d: RunningMoments = e.iter().zip(&b).map(|(x, y)| x.total - y.total).collect();
        assert!(d.mean() < 0.0);
    }
}

#[test]
fn simulated_trace_age_matches_formula_on_its_own_moments() {
    let rates = LevelRates::uniform(1.0).unwrap();
    let plan = CountPlan::two_level(50, 3, 3).unwrap();
    let s = sample_sessions(&plan, &rates, Variant::Exact, DelayMode::Random, 50_000, 5).unwrap();
    let ys: Vec<f64> = s.iter().map(|x| x.total).collect();
    let acc: RunningMoments = ys.iter().copied().collect();
    let est = time_average_from_trace(&SessionTrace::new(ys).unwrap()).unwrap();
    let formula = average_age_session_end(MomentPair::new(acc.mean(), acc.second_moment()).unwrap()).unwrap();
    assert!((est.mean_age - formula).abs() < 0.01 * formula);
}
