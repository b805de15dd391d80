//! Oracles shared by the allocation tests.
#![allow(dead_code)]

use coopgrid::imputation::{CharacteristicOracle, TableGame};
use coopgrid::Coalition;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `min μ` s.t. `x(C) + μ ≥ v(C)` for every proper `C`, `x(N) = v(N)`,
/// solved by a simplex LP over the full table.
pub fn least_core_mu(g: &TableGame) -> (f64, Vec<f64>) {
    let n = g.players();
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let x: Vec<_> = (0..n).map(|_| p.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let mu = p.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for mask in 1..(1u64 << n) - 1 {
        let c = Coalition(mask);
        let mut row: Vec<_> = c.members().map(|i| (x[i], 1.0)).collect();
        row.push((mu, 1.0));
        p.add_constraint(row, ComparisonOp::Ge, g.value(c).unwrap());
    }
    let all: Vec<_> = x.iter().map(|&v| (v, 1.0)).collect();
    p.add_constraint(all, ComparisonOp::Eq, g.value(Coalition::grand(n)).unwrap());
    let sol = p.solve().expect("least-core LP is feasible and bounded");
    (sol[mu], x.iter().map(|&v| sol[v]).collect())
}

/// Range `[min x_i, max x_i]` of each coordinate over the least core at
/// level `mu` (plus `slack`).
pub fn least_core_ranges(g: &TableGame, mu: f64, slack: f64) -> Vec<(f64, f64)> {
    let n = g.players();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut range = [0.0; 2];
        for (k, dir) in [OptimizationDirection::Minimize, OptimizationDirection::Maximize].into_iter().enumerate() {
            let mut p = Problem::new(dir);
            let x: Vec<_> =
                (0..n).map(|j| p.add_var(if j == i { 1.0 } else { 0.0 }, (f64::NEG_INFINITY, f64::INFINITY))).collect();
            for mask in 1..(1u64 << n) - 1 {
                let c = Coalition(mask);
                let row: Vec<_> = c.members().map(|j| (x[j], 1.0)).collect();
                p.add_constraint(row, ComparisonOp::Ge, g.value(c).unwrap() - mu - slack);
            }
            let all: Vec<_> = x.iter().map(|&v| (v, 1.0)).collect();
            p.add_constraint(all, ComparisonOp::Eq, g.value(Coalition::grand(n)).unwrap());
            range[k] = p.solve().expect("least core is nonempty").objective();
        }
        out.push((range[0], range[1]));
    }
    out
}

/// Random game with values uniform in `[-scale, scale]`.
pub fn random_game(n: usize, seed: u64, scale: f64) -> TableGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..1u64 << n).map(|_| rng.gen_range(-scale..scale)).collect();
    TableGame::new(n, values).unwrap()
}

/// Random superadditive game: singletons plus nonnegative synergies that
/// grow with coalition size.
pub fn random_superadditive(n: usize, seed: u64) -> TableGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let single: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let bonus: Vec<f64> = (0..1u64 << n).map(|_| rng.gen_range(0.0..1.0)).collect();
    TableGame::from_fn(n, |c| {
        // sum of bonuses of all subsets keeps the game supermodular
        let mut total = c.sum(&single);
        let mut sub = c.bits();
        while sub != 0 {
            if Coalition(sub).len() >= 2 {
                total += bonus[sub as usize];
            }
            sub = (sub - 1) & c.bits();
        }
        total
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
