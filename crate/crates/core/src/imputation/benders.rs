//! Least-core allocation by constraint generation.
//!
//! The master LP minimises the largest excess `μ` over the coalitions found
//! so far; the subproblem searches for the coalition with the largest excess
//! under the master's allocation. The loop stops once that excess does not
//! exceed `μ` by more than `ε`.

use std::fmt::Write as _;
use std::time::Instant;

use coopgrid_conic::{solve_continuous, ConicProgram, Sense, SolverConfig, Status};
use serde::Serialize;

use crate::coalition::{enumerate_coalitions, Coalition};
use crate::error::{Error, Result};
use crate::imputation::{CharacteristicOracle, MaxExcess};

#[derive(Debug, Clone, PartialEq)]
pub struct BendersConfig {
    /// Termination tolerance on `excess − μ`.
    pub epsilon: f64,
    /// Lower bound on `μ` that keeps the first master bounded.
    pub mu_min: f64,
    pub max_iterations: usize,
    /// Start the master with all singleton cuts.
    pub seed_singletons: bool,
    /// Record wall-clock seconds in the log (off keeps logs reproducible).
    pub record_timings: bool,
}

impl Default for BendersConfig {
    fn default() -> Self {
        BendersConfig { epsilon: 1e-6, mu_min: -1e9, max_iterations: 500, seed_singletons: true, record_timings: false }
    }
}

impl BendersConfig {
    pub fn from_solver(cfg: &SolverConfig) -> BendersConfig {
        BendersConfig { epsilon: cfg.benders_epsilon, mu_min: cfg.mu_min, ..BendersConfig::default() }
    }
}

/// One master/subproblem round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BendersIteration {
    pub iteration: usize,
    /// Master objective.
    pub mu: f64,
    /// Master allocation.
    pub x: Vec<f64>,
    /// Coalition with the largest excess under `x`.
    pub coalition: Coalition,
    pub excess: f64,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BendersLog {
    pub iterations: Vec<BendersIteration>,
}

impl BendersLog {
    /// CSV with columns `iteration,mu,coalition,excess,seconds,x1..xN`;
    /// the coalition is written as its bitmask.
    pub fn to_csv(&self) -> String {
        let n = self.iterations.first().map_or(0, |it| it.x.len());
        let mut out = String::from("iteration,mu,coalition,excess,seconds");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        out.push('\n');
        for it in &self.iterations {
            let secs = it.seconds.map(|s| format!("{s:.3}")).unwrap_or_default();
            let _ = write!(out, "{},{:.9},{},{:.9},{}", it.iteration, it.mu, it.coalition.bits(), it.excess, secs);
            for v in &it.x {
                let _ = write!(out, ",{v:.9}");
            }
            out.push('\n');
        }
        out
    }

    /// Whether `μ_k` never decreases by more than `tol`.
    pub fn mu_nondecreasing(&self, tol: f64) -> bool {
        self.iterations.windows(2).all(|w| w[1].mu >= w[0].mu - tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeastCore {
    pub x: Vec<f64>,
    /// Final master objective.
    pub mu: f64,
    /// Largest excess under `x` found by the last subproblem.
    pub max_excess: f64,
    pub worst_coalition: Coalition,
    pub converged: bool,
    pub log: BendersLog,
    /// Cuts in the final master, singletons included.
    pub cuts: usize,
}

impl LeastCore {
    pub fn iterations(&self) -> usize {
        self.log.iterations.len()
    }
}

/// `min μ` subject to `Σx = v(N)` and `μ ≥ v(C) − x(C)` for each cut,
/// followed by the minimum-norm allocation at that `μ`. The allocation may
/// exceed `μ` on a cut by at most `tol / 2`.
fn master(n: usize, grand: f64, cuts: &[(Coalition, f64)], mu_min: f64, tol: f64) -> Result<(f64, Vec<f64>)> {
    let cfg = SolverConfig { feas_tol: 1e-9, ..SolverConfig::default() };
    let mut p = ConicProgram::new();
    let x: Vec<_> = (0..n).map(|_| p.add_free_var()).collect();
    let mu = p.add_var(mu_min, f64::INFINITY);
    p.set_objective(mu, 1.0);
    p.add_row("efficiency", x.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, grand);
    for &(c, value) in cuts {
        let mut terms: Vec<_> = c.members().map(|i| (x[i], 1.0)).collect();
        terms.push((mu, 1.0));
        p.add_row("cut", terms, Sense::Ge, value);
    }
    let sol = solve_continuous(&p, &cfg);
    if sol.status != Status::Optimal {
        return Err(Error::SolverFailure { status: sol.status, detail: "least-core master LP".into() });
    }
    let mu_star = sol.x[mu.index()];
    let vertex: Vec<f64> = x.iter().map(|v| sol.x[v.index()]).collect();

    let scale = 1.0 + grand.abs() + cuts.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let slack = (1e-9 * scale).min(0.05 * tol);
    let refined = min_norm(n, grand, cuts, mu_star + slack, &cfg);
    let x = match refined {
        Some(r) if worst_cut(&r, cuts, mu_star) <= 0.5 * tol => r,
        _ => vertex,
    };
    Ok((mu_star, x))
}

fn worst_cut(x: &[f64], cuts: &[(Coalition, f64)], mu: f64) -> f64 {
    cuts.iter().map(|&(c, v)| v - c.sum(x) - mu).fold(f64::NEG_INFINITY, f64::max)
}

/// Minimum `‖x‖²` over efficient allocations with every cut excess ≤ `mu`,
/// written around the equal split to keep the cone well scaled.
fn min_norm(n: usize, grand: f64, cuts: &[(Coalition, f64)], mu: f64, cfg: &SolverConfig) -> Option<Vec<f64>> {
    let mean = grand / n as f64;
    let mut p = ConicProgram::new();
    let y: Vec<_> = (0..n).map(|_| p.add_free_var()).collect();
    let t = p.add_var(0.0, f64::INFINITY);
    let half = p.add_var(0.5, 0.5);
    p.set_objective(t, 1.0);
    p.add_rotated(t, half, y.clone());
    p.add_row("efficiency", y.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 0.0);
    for &(c, value) in cuts {
        let terms = c.members().map(|i| (y[i], 1.0)).collect();
        p.add_row("cut", terms, Sense::Ge, value - mu - mean * c.len() as f64);
    }
    let sol = solve_continuous(&p, cfg);
    if sol.status != Status::Optimal {
        return None;
    }
    let mut x: Vec<f64> = y.iter().map(|v| sol.x[v.index()] + mean).collect();
    // restore exact efficiency
    let drift = (x.iter().sum::<f64>() - grand) / n as f64;
    x.iter_mut().for_each(|v| *v -= drift);
    Some(x)
}

/// A lower bound on `μ` that cannot bind once every singleton is cut:
/// those cuts and efficiency already force `μ ≥ (Σ v({i}) − v(N)) / n`.
/// Keeping the bound near the data scale helps the interior-point solver.
fn slack_floor(grand: f64, singles: &[(Coalition, f64)]) -> f64 {
    -(1.0 + grand.abs() + singles.iter().map(|(_, v)| v.abs()).sum::<f64>())
}

/// Least core by constraint generation with the given max-excess search.
pub fn leastcore_benders(
    game: &dyn CharacteristicOracle,
    search: &dyn MaxExcess,
    cfg: &BendersConfig,
) -> Result<LeastCore> {
    let n = game.players();
    if cfg.epsilon.is_nan() || cfg.epsilon <= 0.0 {
        return Err(Error::InvalidArgument(format!("Benders tolerance must be positive, got {}", cfg.epsilon)));
    }
    let grand_c = Coalition::grand(n);
    let grand = game.value(grand_c)?;
    if n < 2 {
        return Ok(LeastCore {
            x: vec![grand; n],
            mu: cfg.mu_min,
            max_excess: f64::NEG_INFINITY,
            worst_coalition: Coalition::EMPTY,
            converged: true,
            log: BendersLog::default(),
            cuts: 0,
        });
    }
    let mut cuts: Vec<(Coalition, f64)> = Vec::new();
    let mut mu_min = cfg.mu_min;
    if cfg.seed_singletons {
        let singles: Vec<Coalition> = (0..n).map(Coalition::singleton).collect();
        game.prefetch(&singles)?;
        for c in singles {
            cuts.push((c, game.value(c)?));
        }
        mu_min = mu_min.max(slack_floor(grand, &cuts));
    }
    let mut log = BendersLog::default();
    let start = Instant::now();
    loop {
        let k = log.iterations.len() + 1;
        let (mu, x) = master(n, grand, &cuts, mu_min, cfg.epsilon)?;
        let found = search.max_excess(&x)?;
        log.iterations.push(BendersIteration {
            iteration: k,
            mu,
            x: x.clone(),
            coalition: found.coalition,
            excess: found.excess,
            seconds: cfg.record_timings.then(|| start.elapsed().as_secs_f64()),
        });
        log::info!("least core iteration {k}: mu {mu:.6}, worst {} excess {:.6}", found.coalition, found.excess);
        let done = found.excess <= mu + cfg.epsilon;
        let repeated = cuts.iter().any(|(c, _)| *c == found.coalition);
        if done || repeated || k >= cfg.max_iterations {
            if repeated && !done {
                log::warn!("coalition {} was cut already; stopping on numerical grounds", found.coalition);
            }
            return Ok(LeastCore {
                x,
                mu,
                max_excess: found.excess,
                worst_coalition: found.coalition,
                converged: done && found.complete,
                log,
                cuts: cuts.len(),
            });
        }
        cuts.push((found.coalition, found.value));
    }
}

/// The least-core LP over every proper coalition, with the same tie-break
/// as the Benders master. Returns `(μ*, x)`.
pub fn least_core_lp(game: &dyn CharacteristicOracle, mu_min: f64) -> Result<(f64, Vec<f64>)> {
    let n = game.players();
    let all: Vec<Coalition> = enumerate_coalitions(n, true)?.collect();
    game.prefetch(&all)?;
    let cuts = all.iter().map(|&c| Ok((c, game.value(c)?))).collect::<Result<Vec<_>>>()?;
    let grand = game.value(Coalition::grand(n))?;
    let singles: Vec<_> = cuts.iter().filter(|(c, _)| c.len() == 1).copied().collect();
    master(n, grand, &cuts, mu_min.max(slack_floor(grand, &singles)), BendersConfig::default().epsilon)
}
