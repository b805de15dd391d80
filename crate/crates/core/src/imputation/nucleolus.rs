use coopgrid_conic::{solve_continuous, ConicProgram, Sense, SolverConfig, Status};
use nalgebra::{DMatrix, DVector};

use crate::coalition::{enumerate_coalitions, Coalition};
use crate::error::{Error, Result};
use crate::imputation::{CharacteristicOracle, NUCLEOLUS_LIMIT};

/// A multiplier above this marks a constraint tight at every optimum.
const DUAL_TOL: f64 = 1e-6;

/// Orthonormal basis of the directions whose value `x(C)` is already pinned.
struct Span {
    n: usize,
    basis: Vec<DVector<f64>>,
}

impl Span {
    fn indicator(n: usize, c: Coalition) -> DVector<f64> {
        DVector::from_fn(n, |i, _| if c.contains(i) { 1.0 } else { 0.0 })
    }

    fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut r = v.clone();
        for b in &self.basis {
            r -= b * b.dot(&r);
        }
        r
    }

    /// Adds `c` if it is independent of the span; reports whether it was.
    fn add(&mut self, c: Coalition) -> bool {
        let v = Span::indicator(self.n, c);
        let r = self.residual(&v);
        let norm = r.norm();
        if norm > 1e-9 * v.norm().max(1.0) {
            self.basis.push(r / norm);
            true
        } else {
            false
        }
    }

    fn contains(&self, c: Coalition) -> bool {
        let v = Span::indicator(self.n, c);
        self.residual(&v).norm() <= 1e-9 * v.norm().max(1.0)
    }

    fn full(&self) -> bool {
        self.basis.len() >= self.n
    }
}

/// Nucleolus by the sequential LP scheme: minimise the largest excess over
/// the coalitions not yet fixed, fix those tight at every optimum (read off
/// the multipliers of the interior-point solution), drop coalitions whose
/// excess the fixed ones determine, and repeat until the allocation is
/// unique. Individual rationality is imposed whenever the imputation set is
/// nonempty; otherwise the result is the prenucleolus.
pub fn nucleolus(game: &dyn CharacteristicOracle) -> Result<Vec<f64>> {
    let n = game.players();
    if n > NUCLEOLUS_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: NUCLEOLUS_LIMIT, method: "nucleolus" });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let grand = Coalition::grand(n);
    let all: Vec<Coalition> = enumerate_coalitions(n, false)?.collect();
    game.prefetch(&all)?;
    let v_grand = game.value(grand)?;
    if n == 1 {
        return Ok(vec![v_grand]);
    }
    let single: Vec<f64> = (0..n).map(|i| game.value(Coalition::singleton(i))).collect::<Result<_>>()?;
    let rational = single.iter().sum::<f64>() <= v_grand + 1e-9 * (1.0 + v_grand.abs());

    let mut span = Span { n, basis: Vec::new() };
    span.add(grand);
    // fixed rows x(C) = rhs, in the order they were pinned
    let mut fixed: Vec<(Coalition, f64)> = vec![(grand, v_grand)];
    let mut free: Vec<Coalition> = enumerate_coalitions(n, true)?.collect();
    let cfg = SolverConfig { feas_tol: 1e-9, ..SolverConfig::default() };

    while !span.full() {
        let mut p = ConicProgram::new();
        let x: Vec<_> = (0..n).map(|_| p.add_free_var()).collect();
        let eps = p.add_free_var();
        p.set_objective(eps, 1.0);
        for &(c, rhs) in &fixed {
            p.add_row("fixed", c.members().map(|i| (x[i], 1.0)).collect(), Sense::Eq, rhs);
        }
        let mut ir_rows = Vec::new();
        if rational {
            for i in 0..n {
                ir_rows.push((i, p.add_row("rational", vec![(x[i], 1.0)], Sense::Ge, single[i])));
            }
        }
        let mut rows = Vec::with_capacity(free.len());
        for &c in &free {
            let mut terms: Vec<_> = c.members().map(|i| (x[i], 1.0)).collect();
            terms.push((eps, 1.0));
            rows.push(p.add_row("excess", terms, Sense::Ge, game.value(c)?));
        }
        let sol = solve_continuous(&p, &cfg);
        if sol.status != Status::Optimal {
            return Err(Error::SolverFailure { status: sol.status, detail: "nucleolus LP".into() });
        }
        let level = sol.x[eps.index()];
        let duals = sol.row_duals.as_deref().unwrap_or(&[]);
        let mut tight: Vec<Coalition> = free
            .iter()
            .zip(&rows)
            .filter(|(_, &r)| duals.get(r).copied().unwrap_or(0.0) > DUAL_TOL)
            .map(|(&c, _)| c)
            .collect();
        let mut pinned_players: Vec<usize> =
            ir_rows.iter().filter(|(_, r)| duals.get(*r).copied().unwrap_or(0.0) > DUAL_TOL).map(|&(i, _)| i).collect();
        if tight.is_empty() && pinned_players.is_empty() {
            // no clear multiplier: fall back to the smallest-slack coalition
            let slack = |k: usize| free[k].sum(&sol.x) + level - game.value(free[k]).unwrap_or(f64::NAN);
            let k = (0..free.len()).min_by(|&a, &b| slack(a).total_cmp(&slack(b))).expect("free coalitions remain");
            tight.push(free[k]);
        }
        for c in tight {
            if span.add(c) {
                fixed.push((c, game.value(c)? - level));
            }
        }
        for i in pinned_players.drain(..) {
            if span.add(Coalition::singleton(i)) {
                fixed.push((Coalition::singleton(i), single[i]));
            }
        }
        free.retain(|&c| !span.contains(c));
        log::debug!(
            "nucleolus: level {level:.9}, {} directions fixed, {} coalitions free",
            span.basis.len(),
            free.len()
        );
    }

    // the pinned rows determine x uniquely; solve them directly
    let mut basis = Span { n, basis: Vec::new() };
    let rows: Vec<&(Coalition, f64)> = fixed.iter().filter(|(c, _)| basis.add(*c)).collect();
    let a = DMatrix::from_fn(n, n, |r, i| if rows[r].0.contains(i) { 1.0 } else { 0.0 });
    let b = DVector::from_iterator(n, rows.iter().map(|(_, rhs)| *rhs));
    let x = a.lu().solve(&b).ok_or_else(|| Error::SolverFailure {
        status: Status::NumericalFailure,
        detail: "nucleolus system is singular".into(),
    })?;
    Ok(x.iter().copied().collect())
}
