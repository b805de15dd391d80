use std::sync::Arc;

use coopgrid::dispatch::value_consistency;
use coopgrid::synthetic::{generate, SyntheticOptions};
use coopgrid::{
    solve_dispatch, verify_robust_feasibility, CharacteristicFunction, Coalition, DispatchMode, Market, Scenario,
};
use coopgrid_conic::SolverConfig;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scenario(prosumers: usize, periods: usize, seed: u64, box_only: bool) -> Scenario {
    generate(&SyntheticOptions { prosumers, periods, seed, box_only, ..SyntheticOptions::default() })
}

fn market(s: Scenario) -> Arc<Market> {
    Arc::new(Market::new(s).unwrap())
}

/// A random pair of nonempty disjoint coalitions among `n` players.
fn disjoint_pair(rng: &mut ChaCha8Rng, n: usize) -> (Coalition, Coalition) {
    loop {
        let mut a = Coalition::EMPTY;
        let mut b = Coalition::EMPTY;
        for i in 0..n {
            match rng.gen_range(0..3) {
                0 => a = a.with(i),
                1 => b = b.with(i),
                _ => {}
            }
        }
        if !a.is_empty() && !b.is_empty() {
            return (a, b);
        }
    }
}

#[test]
fn merging_disjoint_coalitions_never_loses_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(39);
    let mut checked = 0;
    for k in 0..10u64 {
        let n = 4 + (k % 2) as usize;
        let s = scenario(n, 2, 100 + k, k % 3 == 2);
        let cf = CharacteristicFunction::new(market(s), DispatchMode::JointData, SolverConfig::default());
        for _ in 0..10 {
            let (a, b) = disjoint_pair(&mut rng, n);
            let joint = cf.value(a.union(b)).unwrap();
            let apart = cf.value(a).unwrap() + cf.value(b).unwrap();
            assert!(joint >= apart - 1e-6, "scenario {k}: v({}) = {joint} < {apart}", a.union(b));
            checked += 1;
        }
    }
    assert_eq!(checked, 100);
}

#[test]
fn optimal_schedules_survive_sampled_deviations() {
    let suites = [scenario(3, 3, 5, false), scenario(3, 3, 6, true)];
    for s in suites {
        let m = market(s);
        let n = m.num_prosumers();
        for mask in 1..(1u64 << n) {
            let c = Coalition(mask);
            for mode in DispatchMode::ALL {
                if mode == DispatchMode::Isolated && c.len() != 1 {
                    continue;
                }
                let v = solve_dispatch(&m, c, mode, &SolverConfig::default()).unwrap();
                let r = verify_robust_feasibility(&m, &v, 10_000, 7).unwrap();
                assert!(r.passed(), "{c} {mode}: {r:?}");
                assert!(r.max_violation <= 1e-6);
            }
        }
    }
}

#[test]
fn reported_value_matches_schedule_payoff() {
    let m = market(scenario(4, 3, 8, false));
    for mask in [1u64, 3, 6, 13, 15] {
        for mode in [DispatchMode::ElectricityOnly, DispatchMode::JointData] {
            let v = solve_dispatch(&m, Coalition(mask), mode, &SolverConfig::default()).unwrap();
            assert!(value_consistency(&m, &v).unwrap() <= 1e-6);
        }
    }
}

#[test]
fn reserve_shares_sum_to_one_when_renewables_are_present() {
    let s = scenario(4, 3, 9, false);
    let m = market(s.clone());
    for mask in [1u64, 5, 10, 15] {
        let c = Coalition(mask);
        let v = solve_dispatch(&m, c, DispatchMode::JointData, &SolverConfig::default()).unwrap();
        assert!(v.set.has_drg);
        let sch = &v.schedule;
        for t in 0..s.periods() {
            let mut total = 0.0;
            for i in c.members() {
                total += sch.load_share[i][t] + sch.operator_share[i][t];
                total += sch.machine_share[i].iter().map(|g| g[t]).sum::<f64>();
            }
            assert!((total - 1.0).abs() <= 1e-6, "{c} period {t}: shares sum to {total}");
        }
        for i in 0..s.num_prosumers() {
            if !c.contains(i) {
                assert!(sch.load[i].iter().all(|&x| x == 0.0));
            }
        }
    }
}

#[test]
fn pooling_data_dominates_energy_only_trading() {
    let m = market(scenario(4, 2, 10, false));
    let cfg = SolverConfig::default();
    for mask in 1u64..16 {
        let c = Coalition(mask);
        let joint = solve_dispatch(&m, c, DispatchMode::JointData, &cfg).unwrap().value;
        let energy = solve_dispatch(&m, c, DispatchMode::ElectricityOnly, &cfg).unwrap().value;
        assert!(joint >= energy - 1e-6, "{c}: {joint} < {energy}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn smaller_budget_never_lowers_value(seed in 0u64..1000, shrink in 0.1f64..0.9, mask in 1u64..8) {
        let s = scenario(3, 2, seed, false);
        let mut tight = s.clone();
        tight.contributions.historical_budget *= shrink;
        tight.contributions.terms.iter_mut().for_each(|t| t.reduction *= shrink);
        let cfg = SolverConfig::default();
        let c = Coalition(mask);
        let loose = solve_dispatch(&market(s), c, DispatchMode::JointData, &cfg).unwrap().value;
        let tight = solve_dispatch(&market(tight), c, DispatchMode::JointData, &cfg).unwrap().value;
        prop_assert!(tight >= loose - 1e-6, "{} < {}", tight, loose);
    }

    #[test]
    fn worst_case_deviation_grows_with_budget(seed in 0u64..1000, mask in 1u64..16) {
        let m = market(scenario(4, 2, seed, false));
        let c = Coalition(mask);
        let joint = m.uncertainty(c, DispatchMode::JointData).unwrap();
        let energy = m.uncertainty(c, DispatchMode::ElectricityOnly).unwrap();
        for t in 0..2 {
            prop_assert!(joint.up[t] <= energy.up[t] + 1e-12);
            prop_assert!(joint.down[t] <= energy.down[t] + 1e-12);
        }
    }
}
