//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one PASS/FAIL line per criterion; exits nonzero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use coopgrid::imputation::{
    check_core, efficiency_gap, least_core_lp, leastcore_benders, max_excess, nucleolus, shapley, BendersConfig,
    CharacteristicOracle, EnumerationSearch, MaxExcess, MembershipSearch, MisocpSearch, RadiusEncoding, TableGame,
    CORE_TOL,
};
use coopgrid::report::{run_cases, run_sweep};
use coopgrid::synthetic::{generate, SyntheticOptions};
use coopgrid::uncertainty::{support_components, support_ellipsoid, EllipsoidSet};
use coopgrid::{
    load_scenario, solve_dispatch, verify_robust_feasibility, CharacteristicFunction, Coalition, DispatchMode, Market,
    Scenario,
};
use coopgrid_conic::SolverConfig;
use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn load(name: &str) -> Scenario {
    load_scenario(fixture(name)).unwrap()
}

fn market(s: Scenario) -> Arc<Market> {
    Arc::new(Market::new(s).unwrap())
}

fn synthetic(prosumers: usize, periods: usize, seed: u64, box_only: bool) -> Scenario {
    generate(&SyntheticOptions { prosumers, periods, seed, box_only, ..SyntheticOptions::default() })
}

fn joint(m: Arc<Market>) -> CharacteristicFunction {
    CharacteristicFunction::new(m, DispatchMode::JointData, SolverConfig::default())
}

/// The random markets used by the least-core criteria.
fn random_markets() -> Vec<Arc<Market>> {
    (0..20u64).map(|k| market(synthetic(3 + (k % 4) as usize, 2, 300 + k, k % 5 == 4))).collect()
}

// ---- independent oracles ----

/// Least-core `μ*` by a simplex LP over every proper coalition.
fn simplex_least_core(g: &TableGame) -> f64 {
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
    p.add_constraint(
        x.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
        ComparisonOp::Eq,
        g.value(Coalition::grand(n)).unwrap(),
    );
    p.solve().unwrap()[mu]
}

/// Whether the least core at level `mu` is a single point.
fn least_core_is_point(g: &TableGame, mu: f64) -> bool {
    let n = g.players();
    (0..n).all(|i| {
        let mut span = [0.0; 2];
        for (k, dir) in [OptimizationDirection::Minimize, OptimizationDirection::Maximize].into_iter().enumerate() {
            let mut p = Problem::new(dir);
            let x: Vec<_> =
                (0..n).map(|j| p.add_var(if j == i { 1.0 } else { 0.0 }, (f64::NEG_INFINITY, f64::INFINITY))).collect();
            for mask in 1..(1u64 << n) - 1 {
                let c = Coalition(mask);
                p.add_constraint(
                    c.members().map(|j| (x[j], 1.0)).collect::<Vec<_>>(),
                    ComparisonOp::Ge,
                    g.value(c).unwrap() - mu,
                );
            }
            p.add_constraint(
                x.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(),
                ComparisonOp::Eq,
                g.value(Coalition::grand(n)).unwrap(),
            );
            span[k] = p.solve().unwrap().objective();
        }
        span[1] - span[0] <= 1e-7
    })
}

/// Average marginal contribution over every ordering.
fn permutation_average(g: &TableGame) -> Vec<f64> {
    fn walk(g: &TableGame, prefix: &mut Vec<usize>, used: Coalition, phi: &mut [f64], count: &mut usize) {
        let n = g.players();
        if prefix.len() == n {
            let mut c = Coalition::EMPTY;
            let mut before = 0.0;
            for &i in prefix.iter() {
                c = c.with(i);
                let after = g.value(c).unwrap();
                phi[i] += after - before;
                before = after;
            }
            *count += 1;
            return;
        }
        for i in 0..n {
            if !used.contains(i) {
                prefix.push(i);
                walk(g, prefix, used.with(i), phi, count);
                prefix.pop();
            }
        }
    }
    let mut phi = vec![0.0; g.players()];
    let mut count = 0;
    walk(g, &mut Vec::new(), Coalition::EMPTY, &mut phi, &mut count);
    phi.iter().map(|p| p / count as f64).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn random_table(n: usize, seed: u64) -> TableGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TableGame::new(n, (0..1u64 << n).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap()
}

/// Singletons plus a nonnegative bonus for every subset of size two or more.
fn random_supermodular(n: usize, seed: u64) -> TableGame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let single: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let bonus: Vec<f64> = (0..1u64 << n).map(|_| rng.gen_range(0.0..1.0)).collect();
    TableGame::from_fn(n, |c| {
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

// ---- criteria ----

fn case_ordering() -> Outcome {
    let m = market(load("desk3.scn"));
    let started = Instant::now();
    let report = run_cases(&m, &SolverConfig::default());
    let secs = started.elapsed().as_secs_f64();
    ensure(report.failures() == 0, || "a case failed".into())?;
    let t: Vec<f64> = DispatchMode::ALL.iter().map(|&mode| report.case(mode).unwrap().total_payoff).collect();
    let margins = [(t[1] - t[0]) / t[0].abs(), (t[2] - t[1]) / t[1].abs()];
    ensure(margins.iter().all(|&r| r >= 0.01), || format!("totals {t:?}, margins {margins:?}"))?;
    ensure(secs <= 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!(
        "I {:.2} < II {:.2} < III {:.2}, margins {:.1}% / {:.1}%, {secs:.2}s",
        t[0],
        t[1],
        t[2],
        100.0 * margins[0],
        100.0 * margins[1]
    ))
}

fn reserve_elimination() -> Outcome {
    let m = market(load("desk3.scn"));
    let data = m.data();
    let shrink = 1.0 - data.effective_budget(m.scenario().grand()) / data.historical;
    ensure(shrink >= 0.5, || format!("pooling shrinks the budget by only {:.1}%", 100.0 * shrink))?;
    let report = run_cases(&m, &SolverConfig::default());
    let reserve = |mode| {
        let s = report.case(mode).unwrap();
        s.operator_reserve_up + s.operator_reserve_down
    };
    let (ii, iii) = (reserve(DispatchMode::ElectricityOnly), reserve(DispatchMode::JointData));
    ensure(ii > 0.0 && iii <= 0.1 * ii, || format!("operator reserve II {ii:.4}, III {iii:.4}"))?;
    Ok(format!("budget shrinks {:.1}%, operator reserve II {ii:.4} -> III {iii:.4}", 100.0 * shrink))
}

fn benders_equivalence() -> Outcome {
    let mut worst_gap: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for (k, m) in random_markets().into_iter().enumerate() {
        let cf = joint(m);
        let started = Instant::now();
        let lc = leastcore_benders(&cf, &MembershipSearch::new(&cf), &BendersConfig::default()).unwrap();
        let secs = started.elapsed().as_secs_f64();
        let table = TableGame::tabulate(&cf).unwrap();
        let mu = simplex_least_core(&table);
        let (lp_mu, _) = least_core_lp(&table, -1e9).unwrap();
        let (_, true_max) = max_excess(&table, &lc.x).unwrap();
        let gap = (lc.mu - mu).abs().max((lp_mu - mu).abs());
        ensure(lc.converged, || format!("instance {k} did not converge"))?;
        ensure(gap <= 1e-6, || format!("instance {k}: benders {} / LP {lp_mu} vs simplex {mu}", lc.mu))?;
        ensure(true_max <= mu + 1e-6, || format!("instance {k}: true max excess {true_max} above {mu}"))?;
        ensure(secs <= 60.0, || format!("instance {k} took {secs:.1}s"))?;
        worst_gap = worst_gap.max(gap);
        slowest = slowest.max(secs);
    }
    Ok(format!("20 markets, worst |mu gap| {worst_gap:.2e}, slowest {slowest:.2}s"))
}

fn core_membership() -> Outcome {
    let mut markets = random_markets();
    markets.push(market(load("desk3.scn")));
    let mut worst_mu = f64::NEG_INFINITY;
    for (k, m) in markets.into_iter().enumerate() {
        let cf = joint(m);
        let lc = leastcore_benders(&cf, &MembershipSearch::new(&cf), &BendersConfig::default()).unwrap();
        let violations = check_core(&cf, &lc.x, CORE_TOL).unwrap();
        ensure(lc.mu <= 1e-6, || format!("scenario {k}: mu {}", lc.mu))?;
        ensure(violations.is_empty(), || format!("scenario {k}: {violations:?}"))?;
        worst_mu = worst_mu.max(lc.mu);
    }
    Ok(format!("21 scenarios stable, largest mu {worst_mu:.4}"))
}

fn superadditivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(39);
    let mut tightest = f64::INFINITY;
    let mut pairs = 0;
    for k in 0..10u64 {
        let n = 4 + (k % 2) as usize;
        let cf = joint(market(synthetic(n, 2, 100 + k, k % 3 == 2)));
        while pairs < 10 * (k as usize + 1) {
            let (mut a, mut b) = (Coalition::EMPTY, Coalition::EMPTY);
            for i in 0..n {
                match rng.gen_range(0..3) {
                    0 => a = a.with(i),
                    1 => b = b.with(i),
                    _ => {}
                }
            }
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let gain = cf.value(a.union(b)).unwrap() - cf.value(a).unwrap() - cf.value(b).unwrap();
            ensure(gain >= -1e-6, || format!("scenario {k}: merging {a} and {b} loses {gain}"))?;
            tightest = tightest.min(gain);
            pairs += 1;
        }
    }
    Ok(format!("{pairs} disjoint pairs, smallest gain {tightest:.3e}"))
}

fn shapley_axioms() -> Outcome {
    let glove = shapley(&TableGame::glove()).unwrap();
    let err = max_abs_diff(&glove, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0]);
    ensure(err <= 1e-9, || format!("glove {glove:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let n = 2 + (k % 7) as usize;
        let g = random_table(n, 600 + k);
        let phi = shapley(&g).unwrap();
        ensure(efficiency_gap(&g, &phi).unwrap() <= 1e-6, || format!("game {k} not efficient"))?;
        let oracle = permutation_average(&g);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let relabelled = shapley(&g.permuted(&perm)).unwrap();
        let moved: Vec<f64> = (0..n).map(|i| relabelled[perm[i]]).collect();
        let e = max_abs_diff(&phi, &oracle).max(max_abs_diff(&phi, &moved));
        ensure(e <= 1e-9, || format!("game {k}: deviation {e}"))?;
        worst = worst.max(e);
    }
    let cf = joint(market(load("desk3.scn")));
    let phi = shapley(&cf).unwrap();
    ensure(efficiency_gap(&cf, &phi).unwrap() <= 1e-6, || "desk3 Shapley not efficient".into())?;
    Ok(format!("glove error {err:.1e}, 20 random games within {worst:.1e} of the ordering average"))
}

fn nucleolus_oracle() -> Outcome {
    let glove = nucleolus(&TableGame::glove()).unwrap();
    ensure(max_abs_diff(&glove, &[1.0, 0.0, 0.0]) <= 1e-8, || format!("glove {glove:?}"))?;
    let mut games: Vec<(String, TableGame)> =
        (0..60u64).map(|s| (format!("random {s}"), random_supermodular(3 + (s % 2) as usize, 700 + s))).collect();
    games.push(("desk3".into(), TableGame::tabulate(&joint(market(load("desk3.scn")))).unwrap()));
    let mut checked = Vec::new();
    let mut worst: f64 = 0.0;
    for (name, g) in games {
        let mu = simplex_least_core(&g);
        if !least_core_is_point(&g, mu) {
            continue;
        }
        let lc = leastcore_benders(&g, &EnumerationSearch::new(&g), &BendersConfig::default()).unwrap();
        let nu = nucleolus(&g).unwrap();
        let d = max_abs_diff(&lc.x, &nu);
        ensure(d <= 1e-6, || format!("{name}: least core {:?} vs nucleolus {nu:?}", lc.x))?;
        worst = worst.max(d);
        checked.push(name);
    }
    ensure(checked.len() >= 5, || format!("only {} games had a one-point least core", checked.len()))?;
    let desk3 = if checked.iter().any(|n| n == "desk3") { " (desk3 included)" } else { "" };
    Ok(format!("glove exact; {} one-point least cores{desk3}, max gap {worst:.1e}", checked.len()))
}

fn robust_feasibility() -> Outcome {
    let suite = [
        ("desk1", load("desk1.scn")),
        ("desk3", load("desk3.scn")),
        ("synthetic", synthetic(3, 3, 5, false)),
        ("synthetic box", synthetic(3, 3, 6, true)),
    ];
    let mut schedules = 0;
    let mut worst: f64 = 0.0;
    for (name, s) in suite {
        let m = market(s);
        let n = m.num_prosumers();
        for mask in 1..(1u64 << n) {
            let c = Coalition(mask);
            for mode in DispatchMode::ALL {
                if mode == DispatchMode::Isolated && c.len() != 1 {
                    continue;
                }
                let v = solve_dispatch(&m, c, mode, &SolverConfig::default()).unwrap();
                let r = verify_robust_feasibility(&m, &v, 10_000, 8).unwrap();
                ensure(r.max_violation <= 1e-6 && r.passed(), || format!("{name} {c} {mode}: {r:?}"))?;
                worst = worst.max(r.max_violation);
                schedules += 1;
            }
        }
    }
    Ok(format!("{schedules} schedules x 10000 samples, worst violation {worst:.1e}"))
}

fn support_function() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(36);
    let mut worst_rel: f64 = 0.0;
    for k in 0..50u64 {
        let dim = 2 + (k % 2) as usize;
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let q = &b * b.transpose() + DMatrix::identity(dim, dim) * rng.gen_range(0.05..0.5);
        let c = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
        let r = rng.gen_range(0.1..4.0);
        let a = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
        let exact = support_ellipsoid(&a, &EllipsoidSet::new(c.clone(), q.clone(), r).unwrap()).unwrap();
        // boundary points through the eigendecomposition of the shape
        let eig = SymmetricEigen::new(q);
        let map = &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (r / l).sqrt()));
        let mut sampler = ChaCha8Rng::seed_from_u64(k);
        let mut best = f64::NEG_INFINITY;
        for _ in 0..100_000 {
            let u = DVector::<f64>::from_fn(dim, |_, _| sampler.sample(StandardNormal));
            best = best.max(a.dot(&(&c + &map * (&u / u.norm()))));
        }
        let rel = (exact - best).abs() / exact.abs().max(1e-12);
        ensure(rel <= 1e-3 && best <= exact + 1e-9, || format!("instance {k}: closed form {exact}, sampled {best}"))?;
        worst_rel = worst_rel.max(rel);
    }
    let mut worst_scale: f64 = 0.0;
    for _ in 0..50 {
        let dim = rng.gen_range(1..6);
        let b = DMatrix::from_fn(dim, dim, |_, _| rng.gen_range(-1.0..1.0));
        let q = &b * b.transpose() + DMatrix::identity(dim, dim) * 0.1;
        let e = EllipsoidSet::new(DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)), q, 1.0).unwrap();
        let a = DVector::from_fn(dim, |_, _| rng.gen_range(-2.0..2.0));
        let (lin, norm) = support_components(&a, &e).unwrap();
        for r in [0.01, 0.25, 2.0, 9.0] {
            let h = support_ellipsoid(&a, &e.with_budget(r).unwrap()).unwrap();
            worst_scale = worst_scale.max((h - lin - r.sqrt() * norm).abs() / (1.0 + norm));
        }
    }
    ensure(worst_scale <= 1e-10, || format!("root-budget scaling off by {worst_scale}"))?;
    Ok(format!("50 instances, worst relative gap {worst_rel:.1e}; scaling error {worst_scale:.1e}"))
}

fn big_m_soundness() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    let mut saturated = 0;
    for (n, seed) in [(3usize, 11u64), (4, 12), (5, 13)] {
        let cf = joint(market(synthetic(n, 2, seed, false)));
        let grand = cf.value(Coalition::grand(n)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exact = MisocpSearch::new(&cf, RadiusEncoding::Exact);
        for _ in 0..2 {
            let mut x: Vec<f64> = (0..n).map(|_| grand / n as f64 * rng.gen_range(0.7..1.3)).collect();
            let drift = (x.iter().sum::<f64>() - grand) / n as f64;
            x.iter_mut().for_each(|v| *v -= drift);
            let a = exact.max_excess(&x).unwrap();
            let b = MembershipSearch::new(&cf).max_excess(&x).unwrap();
            let gap = (a.excess - b.excess).abs();
            ensure(a.complete && gap <= 1e-6, || format!("N={n}: MISOCP {} vs search {}", a.excess, b.excess))?;
            let (_, audit) = exact.model(&x).unwrap().audit_at(a.coalition, &SolverConfig::default()).unwrap();
            ensure(audit.violations() == 0, || format!("N={n}: big-M audit {audit:?}"))?;
            saturated += audit.issues.len();
            worst = worst.max(gap);
            checked += 1;
        }
    }
    Ok(format!("{checked} subproblems, max gap {worst:.1e}, no big-M violations ({saturated} near-saturation notes)"))
}

fn scalability() -> Outcome {
    let cf = joint(market(load("desk16.scn")));
    let started = Instant::now();
    let lc = leastcore_benders(&cf, &MembershipSearch::new(&cf), &BendersConfig::default()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let k = lc.iterations();
    ensure(lc.converged, || "did not converge".into())?;
    ensure(k <= 200, || format!("{k} iterations"))?;
    ensure(secs <= 1800.0, || format!("took {secs:.0}s"))?;
    ensure(lc.log.mu_nondecreasing(1e-6), || "master objective decreased".into())?;
    Ok(format!(
        "{k} iterations ({:.3}% of 65536 coalitions), {} solves, mu {:.4}, {secs:.0}s",
        100.0 * k as f64 / 65536.0,
        cf.solves(),
        lc.mu
    ))
}

fn price_sweep() -> Outcome {
    let rows = run_sweep(&load("desk3.scn"), &[0.5, 1.0, 1.5, 2.0], &SolverConfig::default()).unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r.data_value).collect();
    ensure(values.windows(2).all(|w| w[1] >= w[0]), || format!("data values {values:?}"))?;
    Ok(format!("data value {:.2} / {:.2} / {:.2} / {:.2}", values[0], values[1], values[2], values[3]))
}

fn determinism() -> Outcome {
    let d1 = fixture("desk1.scn").to_string_lossy().into_owned();
    let d3 = fixture("desk3.scn").to_string_lossy().into_owned();
    let runs: Vec<Vec<&str>> = vec![
        vec!["validate", &d3],
        vec!["solve", &d3],
        vec!["value", &d3, "--coalition", "5"],
        vec!["cases", &d3],
        vec!["impute", &d3, "--method", "shapley"],
        vec!["impute", &d3, "--method", "nucleolus"],
        vec!["impute", &d3, "--method", "leastcore"],
        vec!["sweep", &d3],
        vec!["verify", &d1],
        vec!["dump-program", &d3, "--coalition", "3"],
        vec!["generate", "--prosumers", "5", "--seed", "3"],
    ];
    for args in &runs {
        let mut outputs = Vec::new();
        for _ in 0..3 {
            let out = Command::new(env!("CARGO_BIN_EXE_coopgrid"))
                .arg("--threads")
                .arg("1")
                .args(args)
                .env_remove("COOPGRID_TIME_LIMIT")
                .output()
                .unwrap();
            ensure(out.status.success(), || format!("{args:?} failed: {}", String::from_utf8_lossy(&out.stderr)))?;
            outputs.push(out.stdout);
        }
        ensure(outputs.windows(2).all(|w| w[0] == w[1]), || format!("{args:?} output differs between runs"))?;
    }
    Ok(format!("{} subcommand invocations x 3 runs byte-identical", runs.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 13] = [
        ("case ordering", case_ordering),
        ("reserve elimination", reserve_elimination),
        ("Benders vs enumeration", benders_equivalence),
        ("core membership", core_membership),
        ("superadditivity", superadditivity),
        ("Shapley axioms", shapley_axioms),
        ("nucleolus oracle", nucleolus_oracle),
        ("robust feasibility", robust_feasibility),
        ("support function", support_function),
        ("big-M soundness", big_m_soundness),
        ("scalability", scalability),
        ("price sweep", price_sweep),
        ("determinism", determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
