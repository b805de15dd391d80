mod common;

use std::sync::Arc;
use std::time::Instant;

use common::least_core_mu;
use coopgrid::imputation::{
    check_core, least_core_lp, leastcore_benders, max_excess, BendersConfig, MembershipSearch, TableGame, CORE_TOL,
};
use coopgrid::synthetic::{generate, SyntheticOptions};
use coopgrid::{CharacteristicFunction, DispatchMode, Market};
use coopgrid_conic::SolverConfig;

fn game(prosumers: usize, seed: u64, box_only: bool) -> CharacteristicFunction {
    let s = generate(&SyntheticOptions { prosumers, periods: 2, seed, box_only, ..SyntheticOptions::default() });
    CharacteristicFunction::new(Arc::new(Market::new(s).unwrap()), DispatchMode::JointData, SolverConfig::default())
}

#[test]
fn benders_matches_enumeration_on_random_markets() {
    for k in 0..20u64 {
        let n = 3 + (k % 4) as usize;
        let cf = game(n, 300 + k, k % 5 == 4);
        let started = Instant::now();
        let lc = leastcore_benders(&cf, &MembershipSearch::new(&cf), &BendersConfig::default()).unwrap();
        let elapsed = started.elapsed().as_secs_f64();
        assert!(lc.converged);
        assert!(elapsed <= 60.0, "instance {k} took {elapsed:.1}s");
        assert!(lc.log.mu_nondecreasing(1e-6));

        let table = TableGame::tabulate(&cf).unwrap();
        let (mu, _) = least_core_mu(&table);
        let (lp_mu, _) = least_core_lp(&table, -1e9).unwrap();
        assert!((lc.mu - mu).abs() <= 1e-6, "instance {k}: benders {} vs simplex {mu}", lc.mu);
        assert!((lp_mu - mu).abs() <= 1e-6, "instance {k}: interior point {lp_mu} vs simplex {mu}");
        let (_, worst) = max_excess(&table, &lc.x).unwrap();
        assert!(worst <= mu + 1e-6, "instance {k}: max excess {worst} above {mu}");

        // the grand coalition is stable on these markets
        assert!(lc.mu <= 1e-6, "instance {k}: mu {}", lc.mu);
        assert!(check_core(&table, &lc.x, CORE_TOL).unwrap().is_empty());
    }
}
