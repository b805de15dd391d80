//! Continuous solve contract and the default interior-point backend.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use crate::{ConicProgram, Sense, Solution, SolveStats, SolverConfig, Status};

/// Anything that can solve the continuous relaxation of a [`ConicProgram`].
///
/// Integrality marks are ignored; bounds are honoured as given.
pub trait ContinuousSolver: Sync {
    fn solve(&self, program: &ConicProgram, cfg: &SolverConfig) -> Solution;
}

/// Clarabel interior-point backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct ClarabelBackend;

/// Where a program row landed in the stacked Clarabel constraint matrix.
struct RowSlot {
    index: usize,
}

struct Assembled {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
    row_slots: Vec<RowSlot>,
}

/// Stacks `A x + s = b` as [zero block; nonnegative block; one block per cone].
fn assemble(p: &ConicProgram) -> Assembled {
    let n = p.num_vars();
    let (lower, upper) = (p.lower_bounds(), p.upper_bounds());
    let mut ti: Vec<usize> = Vec::new();
    let mut tj: Vec<usize> = Vec::new();
    let mut tv: Vec<f64> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    let mut row_slots: Vec<Option<RowSlot>> = (0..p.rows().len()).map(|_| None).collect();

    let mut push = |ti: &mut Vec<usize>, entries: &[(usize, f64)], rhs: f64, b: &mut Vec<f64>| {
        let r = b.len();
        for &(j, v) in entries {
            ti.push(r);
            tj.push(j);
            tv.push(v);
        }
        b.push(rhs);
        r
    };

    // zero cone: equality rows and fixed variables
    for (k, row) in p.rows().iter().enumerate() {
        if row.sense == Sense::Eq {
            let e: Vec<(usize, f64)> = row.terms.iter().map(|&(v, a)| (v.0, a)).collect();
            let r = push(&mut ti, &e, row.rhs, &mut b);
            row_slots[k] = Some(RowSlot { index: r });
        }
    }
    for j in 0..n {
        if lower[j] == upper[j] && lower[j].is_finite() {
            push(&mut ti, &[(j, 1.0)], lower[j], &mut b);
        }
    }
    let zero_rows = b.len();

    // nonnegative cone: inequality rows and finite bounds
    for (k, row) in p.rows().iter().enumerate() {
        let sign = match row.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => continue,
        };
        let e: Vec<(usize, f64)> = row.terms.iter().map(|&(v, a)| (v.0, sign * a)).collect();
        let r = push(&mut ti, &e, sign * row.rhs, &mut b);
        row_slots[k] = Some(RowSlot { index: r });
    }
    for j in 0..n {
        if lower[j] == upper[j] && lower[j].is_finite() {
            continue;
        }
        if lower[j].is_finite() {
            push(&mut ti, &[(j, -1.0)], -lower[j], &mut b);
        }
        if upper[j].is_finite() {
            push(&mut ti, &[(j, 1.0)], upper[j], &mut b);
        }
    }
    let nonneg_rows = b.len() - zero_rows;

    let mut cones = Vec::new();
    if zero_rows > 0 {
        cones.push(SupportedConeT::ZeroConeT(zero_rows));
    }
    if nonneg_rows > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(nonneg_rows));
    }
    // s = −A x must lie in the cone, so each member row is −e_j
    for cone in p.socs() {
        push(&mut ti, &[(cone.head.0, -1.0)], 0.0, &mut b);
        for v in &cone.tail {
            push(&mut ti, &[(v.0, -1.0)], 0.0, &mut b);
        }
        cones.push(SupportedConeT::SecondOrderConeT(1 + cone.tail.len()));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for cone in p.rotated() {
        let (a, c) = (cone.first.0, cone.second.0);
        push(&mut ti, &[(a, -h), (c, -h)], 0.0, &mut b);
        push(&mut ti, &[(a, -h), (c, h)], 0.0, &mut b);
        for v in &cone.tail {
            push(&mut ti, &[(v.0, -1.0)], 0.0, &mut b);
        }
        cones.push(SupportedConeT::SecondOrderConeT(2 + cone.tail.len()));
    }

    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, n, ti, tj, tv);
    Assembled { a, b, cones, row_slots: row_slots.into_iter().map(|s| s.expect("every row is placed")).collect() }
}

impl ContinuousSolver for ClarabelBackend {
    fn solve(&self, program: &ConicProgram, cfg: &SolverConfig) -> Solution {
        let start = Instant::now();
        if let Err(e) = program.validate() {
            return Solution::failed(Status::NumericalFailure, e.to_string());
        }
        let n = program.num_vars();
        if n == 0 {
            return Solution {
                status: Status::Optimal,
                x: Vec::new(),
                objective: program.offset(),
                row_duals: Some(vec![0.0; program.rows().len()]),
                stats: SolveStats { nodes: 1, backend_status: "empty".into(), ..Default::default() },
            };
        }
        let asm = assemble(program);
        // Interior-point tolerances start a decade below the acceptance
        // tolerance; a run that stalls short of it is retried once at the
        // acceptance tolerance itself. Either way the point is judged by its
        // scaled residual.
        let base = (cfg.feas_tol * 0.1).max(1e-12);
        let mut iterations = 0;
        let mut out = attempt(program, &asm, cfg, base);
        iterations += out.stats.iterations;
        if matches!(out.status, Status::NumericalFailure) {
            let retry = attempt(program, &asm, cfg, cfg.feas_tol);
            iterations += retry.stats.iterations;
            if retry.status != Status::NumericalFailure {
                out = retry;
            }
        }
        out.stats.iterations = iterations;
        out.stats.seconds = start.elapsed().as_secs_f64();
        out
    }
}

fn attempt(program: &ConicProgram, asm: &Assembled, cfg: &SolverConfig, tol: f64) -> Solution {
    let n = program.num_vars();
    let p = CscMatrix::<f64>::zeros((n, n));
    let q = program.objective().to_vec();
    let mut builder = DefaultSettingsBuilder::<f64>::default();
    builder.verbose(false).max_iter(cfg.max_iter).max_threads(1).tol_feas(tol).tol_gap_abs(tol).tol_gap_rel(tol);
    if let Some(t) = cfg.time_limit {
        builder.time_limit(t);
    }
    let settings = match builder.build() {
        Ok(s) => s,
        Err(e) => return Solution::failed(Status::NumericalFailure, format!("{e:?}")),
    };
    let mut solver = match DefaultSolver::new(&p, &q, &asm.a, &asm.b, &asm.cones, settings) {
        Ok(s) => s,
        Err(e) => return Solution::failed(Status::NumericalFailure, format!("{e:?}")),
    };
    solver.solve();
    let sol = &solver.solution;
    let raw = format!("{:?}", sol.status);

    let x = sol.x.clone();
    let residual = if x.iter().all(|v| v.is_finite()) { program.scaled_violation(&x) } else { f64::INFINITY };
    let status = match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {
            if residual <= cfg.feas_tol {
                Status::Optimal
            } else {
                Status::NumericalFailure
            }
        }
        // Clarabel occasionally stalls right at the optimum; accept the
        // point when it satisfies every row and the duality gap is tiny.
        SolverStatus::InsufficientProgress => {
            let gap = (sol.obj_val - sol.obj_val_dual).abs();
            let scale = 1.0 + sol.obj_val.abs().max(sol.obj_val_dual.abs());
            if residual <= cfg.feas_tol && gap <= 1e-7 * scale {
                Status::Optimal
            } else {
                Status::NumericalFailure
            }
        }
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Status::Infeasible,
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => Status::Unbounded,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => Status::IterLimit,
        _ => Status::NumericalFailure,
    };
    let has_point = matches!(status, Status::Optimal | Status::IterLimit | Status::NumericalFailure);
    let row_duals =
        if status == Status::Optimal { Some(asm.row_slots.iter().map(|s| sol.z[s.index]).collect()) } else { None };
    Solution {
        status,
        objective: if has_point { program.objective_value(&x) } else { f64::NAN },
        x: if has_point { x } else { Vec::new() },
        row_duals,
        stats: SolveStats {
            iterations: sol.iterations as u64,
            nodes: 1,
            seconds: 0.0,
            max_residual: residual,
            backend_status: raw,
            node_log: Vec::new(),
        },
    }
}

/// Test doubles for exercising code that sits on top of a backend.
pub mod testing {
    use std::sync::Mutex;

    use super::ContinuousSolver;
    use crate::{ConicProgram, Solution, SolverConfig, Status};

    /// Delegates to an inner backend and records the bounds of every
    /// program it was asked to solve, in call order.
    pub struct RecordingBackend<B> {
        inner: B,
        calls: Mutex<Vec<Vec<(f64, f64)>>>,
    }

    impl<B: ContinuousSolver> RecordingBackend<B> {
        pub fn new(inner: B) -> Self {
            RecordingBackend { inner, calls: Mutex::new(Vec::new()) }
        }

        pub fn calls(&self) -> Vec<Vec<(f64, f64)>> {
            self.calls.lock().unwrap().clone()
        }
    }

    impl<B: ContinuousSolver> ContinuousSolver for RecordingBackend<B> {
        fn solve(&self, program: &ConicProgram, cfg: &SolverConfig) -> Solution {
            let bounds = program.lower_bounds().iter().zip(program.upper_bounds()).map(|(&l, &u)| (l, u)).collect();
            self.calls.lock().unwrap().push(bounds);
            self.inner.solve(program, cfg)
        }
    }

    /// Returns the same status for every solve, without a point.
    pub struct FailingBackend(pub Status);

    impl ContinuousSolver for FailingBackend {
        fn solve(&self, _program: &ConicProgram, _cfg: &SolverConfig) -> Solution {
            Solution::failed(self.0, "test double")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Var;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    #[test]
    fn one_row_lp() {
        let mut p = ConicProgram::new();
        let x = p.add_free_var();
        p.set_objective(x, 1.0);
        p.add_row("lb", vec![(x, 1.0)], Sense::Ge, 3.0);
        let s = ClarabelBackend.solve(&p, &cfg());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 3.0).abs() < 1e-8);
        let duals = s.row_duals.unwrap();
        assert!((duals[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cone_projection_with_fixed_constants() {
        let mut p = ConicProgram::new();
        let t = p.add_free_var();
        let a = p.add_var(3.0, 3.0);
        let b = p.add_var(4.0, 4.0);
        p.set_objective(t, 1.0);
        p.add_soc(t, vec![a, b]);
        let s = ClarabelBackend.solve(&p, &cfg());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 5.0).abs() < 1e-7);
    }

    #[test]
    fn free_variable_is_unbounded() {
        let mut p = ConicProgram::new();
        let x = p.add_free_var();
        p.set_objective(x, -1.0);
        let s = ClarabelBackend.solve(&p, &cfg());
        assert_eq!(s.status, Status::Unbounded);
        assert!(s.objective.is_nan());
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = ConicProgram::new();
        let x = p.add_var(0.0, 1.0);
        p.add_row("hi", vec![(x, 1.0)], Sense::Ge, 2.0);
        let s = ClarabelBackend.solve(&p, &cfg());
        assert_eq!(s.status, Status::Infeasible);
    }

    #[test]
    fn rotated_cone_epigraph_of_square() {
        // min s − 4x  with s ≥ x²  →  x = 2, objective −4
        let mut p = ConicProgram::new();
        let s = p.add_var(0.0, f64::INFINITY);
        let half = p.add_var(0.5, 0.5);
        let x = p.add_free_var();
        p.set_objective(s, 1.0);
        p.set_objective(x, -4.0);
        p.add_rotated(s, half, vec![x]);
        let sol = ClarabelBackend.solve(&p, &cfg());
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.objective + 4.0).abs() < 1e-7);
        assert!((sol.x[x.0] - 2.0).abs() < 1e-5);
    }

    #[test]
    fn invalid_program_reports_failure_without_panicking() {
        let mut p = ConicProgram::new();
        let x = p.add_var(0.0, 1.0);
        p.add_row("r", vec![(x, 1.0), (Var(9), 1.0)], Sense::Le, 1.0);
        let s = ClarabelBackend.solve(&p, &cfg());
        assert_eq!(s.status, Status::NumericalFailure);
    }
}
