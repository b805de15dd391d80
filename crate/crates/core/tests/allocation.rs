mod common;

use common::{least_core_mu, least_core_ranges, max_abs_diff, random_game, random_superadditive};
use coopgrid::imputation::{
    efficiency_gap, least_core_lp, leastcore_benders, max_excess, nucleolus, shapley, BendersConfig,
    CharacteristicOracle, EnumerationSearch, MembershipSearch, TableGame,
};
use coopgrid::Coalition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Average marginal contribution over all `n!` orderings (Heap's algorithm).
fn permutation_average(g: &TableGame) -> Vec<f64> {
    let n = g.players();
    let mut order: Vec<usize> = (0..n).collect();
    let mut phi = vec![0.0; n];
    let mut count = 0usize;
    let mut visit = |order: &[usize]| {
        let mut c = Coalition::EMPTY;
        let mut before = 0.0;
        for &i in order {
            c = c.with(i);
            let after = g.value(c).unwrap();
            phi[i] += after - before;
            before = after;
        }
        count += 1;
    };
    let mut stack = vec![0usize; n];
    visit(&order);
    let mut k = 1;
    while k < n {
        if stack[k] < k {
            if k % 2 == 0 {
                order.swap(0, k);
            } else {
                order.swap(stack[k], k);
            }
            visit(&order);
            stack[k] += 1;
            k = 1;
        } else {
            stack[k] = 0;
            k += 1;
        }
    }
    phi.iter().map(|p| p / count as f64).collect()
}

#[test]
fn shapley_on_glove_game() {
    let phi = shapley(&TableGame::glove()).unwrap();
    assert!(max_abs_diff(&phi, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]) <= 1e-9, "{phi:?}");
}

#[test]
fn shapley_matches_permutation_average_and_relabelling() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for k in 0..20u64 {
        let n = 2 + (k % 7) as usize;
        let g = random_game(n, 600 + k, 10.0);
        let phi = shapley(&g).unwrap();
        let oracle = permutation_average(&g);
        assert!(max_abs_diff(&phi, &oracle) <= 1e-9, "game {k}: {phi:?} vs {oracle:?}");
        assert!(efficiency_gap(&g, &phi).unwrap() <= 1e-6);

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let relabelled = shapley(&g.permuted(&perm)).unwrap();
        for i in 0..n {
            assert!((relabelled[perm[i]] - phi[i]).abs() <= 1e-9);
        }
    }
}

#[test]
fn nucleolus_on_glove_game() {
    let x = nucleolus(&TableGame::glove()).unwrap();
    assert!(max_abs_diff(&x, &[1.0, 0.0, 0.0]) <= 1e-8, "{x:?}");
}

#[test]
fn nucleolus_is_the_least_core_when_that_is_a_point() {
    let mut singletons = 0;
    for seed in 0..60u64 {
        let n = 3 + (seed % 2) as usize;
        let g = random_superadditive(n, 700 + seed);
        let (mu, _) = least_core_mu(&g);
        let point = least_core_ranges(&g, mu, 0.0).iter().all(|(lo, hi)| hi - lo <= 1e-7);
        if !point {
            continue;
        }
        singletons += 1;
        let lc = leastcore_benders(&g, &EnumerationSearch::new(&g), &BendersConfig::default()).unwrap();
        let nu = nucleolus(&g).unwrap();
        assert!(max_abs_diff(&lc.x, &nu) <= 1e-6, "seed {seed}: {:?} vs {nu:?}", lc.x);
    }
    assert!(singletons >= 5, "only {singletons} games had a one-point least core");
}

#[test]
fn nucleolus_lies_in_the_least_core() {
    for seed in 0..10u64 {
        let g = random_superadditive(4, 800 + seed);
        let (mu, _) = least_core_mu(&g);
        let x = nucleolus(&g).unwrap();
        assert!(efficiency_gap(&g, &x).unwrap() <= 1e-6);
        assert!(max_excess(&g, &x).unwrap().1 <= mu + 1e-6);
    }
}

#[test]
fn least_core_agrees_with_simplex_oracle() {
    for seed in 0..20u64 {
        let n = 3 + (seed % 4) as usize;
        let g = random_game(n, 900 + seed, 10.0);
        let (mu, _) = least_core_mu(&g);
        let (lp_mu, lp_x) = least_core_lp(&g, -1e9).unwrap();
        assert!((lp_mu - mu).abs() <= 1e-6, "seed {seed}: {lp_mu} vs {mu}");
        assert!(max_excess(&g, &lp_x).unwrap().1 <= mu + 1e-6);

        let lc = leastcore_benders(&g, &EnumerationSearch::new(&g), &BendersConfig::default()).unwrap();
        assert!(lc.converged);
        assert!((lc.mu - mu).abs() <= 1e-6, "seed {seed}: benders {} vs {mu}", lc.mu);
        assert!(lc.log.mu_nondecreasing(1e-6));
    }
}

#[test]
fn membership_search_benders_on_superadditive_games() {
    for seed in 0..10u64 {
        let n = 3 + (seed % 4) as usize;
        let g = random_superadditive(n, 1000 + seed);
        let (mu, _) = least_core_mu(&g);
        let lc = leastcore_benders(&g, &MembershipSearch::new(&g), &BendersConfig::default()).unwrap();
        assert!((lc.mu - mu).abs() <= 1e-6, "seed {seed}: {} vs {mu}", lc.mu);
        assert!(mu <= 1e-9, "superadditive games built this way have a core");
        assert!(max_excess(&g, &lc.x).unwrap().1 <= mu + 1e-6);
    }
}
