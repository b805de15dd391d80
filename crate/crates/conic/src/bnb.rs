//! Best-first branch-and-bound over binary variables.
//!
//! Nodes are kept in a heap ordered by relaxation bound (ties by creation
//! order). After each branching the child on the rounding side of the
//! fractional value is processed immediately (plunging) while the sibling
//! goes to the heap, which finds incumbents early. Everything runs on one
//! worker, so the branching sequence is a pure function of the input.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::{debug, warn};

use crate::backend::{ClarabelBackend, ContinuousSolver};
use crate::{ConicProgram, Solution, SolveStats, SolverConfig, Status, Var};

/// A binary is integral when within this distance of 0 or 1.
pub const INTEGRALITY_TOL: f64 = 1e-6;

/// Exact evaluation of an integral pattern.
///
/// Some models only carry a relaxation of their true value (for instance a
/// convex over-estimate of a concave term). At every integral node the
/// refiner is handed the binary pattern, in the order of
/// [`ConicProgram::binaries`], and returns the exact solution for that
/// pattern in the program's minimisation sense, or `None` if the pattern is
/// infeasible.
pub trait IntegralRefiner {
    fn refine(&self, pattern: &[bool]) -> Option<Solution>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOutcome {
    Infeasible,
    /// Bound no better than the incumbent.
    Pruned,
    Integral,
    Branched,
    /// The continuous solve failed; the subtree was dropped.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Variable fixed when this node was created and the value it was fixed to.
    pub branch: Option<(Var, bool)>,
    /// Relaxation objective (NaN when not solved to optimality).
    pub bound: f64,
    /// Objective of the integral point found here, if any.
    pub integral_objective: Option<f64>,
    pub outcome: NodeOutcome,
}

struct Node {
    id: usize,
    parent: Option<usize>,
    depth: usize,
    branch: Option<(Var, bool)>,
    fixings: Vec<(Var, f64)>,
    parent_bound: f64,
}

struct Queued {
    key: f64,
    node: Node,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // BinaryHeap is a max-heap: smaller bound, then smaller id, comes first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.node.id.cmp(&self.node.id))
    }
}

struct Search<'a, B: ContinuousSolver + ?Sized> {
    backend: &'a B,
    refiner: Option<&'a dyn IntegralRefiner>,
    base: &'a ConicProgram,
    relaxed: ConicProgram,
    binaries: Vec<Var>,
    cfg: &'a SolverConfig,
    incumbent: Option<Solution>,
    incomplete: bool,
    root_status: Option<Status>,
    iterations: u64,
    nodes: usize,
    next_id: usize,
    log: Vec<NodeRecord>,
}

impl<'a, B: ContinuousSolver + ?Sized> Search<'a, B> {
    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |s| s.objective)
    }

    fn prunable(&self, bound: f64) -> bool {
        let inc = self.incumbent_value();
        inc.is_finite() && bound >= inc - (self.cfg.rel_gap * inc.abs()).max(1e-9)
    }

    fn offer(&mut self, candidate: Solution) {
        if candidate.objective < self.incumbent_value() {
            debug!("new incumbent {:.9}", candidate.objective);
            self.incumbent = Some(candidate);
        }
    }

    fn solve_with(&mut self, fixings: &[(Var, f64)]) -> Solution {
        let mut p = self.relaxed.clone();
        for &(v, val) in fixings {
            p.fix(v, val);
        }
        let s = self.backend.solve(&p, self.cfg);
        self.iterations += s.stats.iterations;
        s
    }

    fn child(&mut self, parent: &Node, bound: f64, v: Var, up: bool) -> Node {
        let mut fixings = parent.fixings.clone();
        fixings.push((v, if up { 1.0 } else { 0.0 }));
        self.next_id += 1;
        Node {
            id: self.next_id,
            parent: Some(parent.id),
            depth: parent.depth + 1,
            branch: Some((v, up)),
            fixings,
            parent_bound: bound,
        }
    }

    /// Binary values at a node where every binary is fixed.
    fn fixed_pattern(&self, node: &Node) -> Vec<bool> {
        self.binaries
            .iter()
            .map(|&v| match node.fixings.iter().find(|&&(w, _)| w == v) {
                Some(&(_, val)) => val > 0.5,
                None => self.base.bounds(v).0 > 0.5,
            })
            .collect()
    }

    fn free_binaries(&self, node: &Node) -> Vec<Var> {
        self.binaries
            .iter()
            .copied()
            .filter(|&v| {
                let (lo, hi) = self.base.bounds(v);
                lo < hi && !node.fixings.iter().any(|&(w, _)| w == v)
            })
            .collect()
    }

    /// Processes one node; returns the children to explore, the first of
    /// which should be plunged into.
    fn process(&mut self, node: Node) -> Vec<Node> {
        self.nodes += 1;
        let mut record = NodeRecord {
            id: node.id,
            parent: node.parent,
            depth: node.depth,
            branch: node.branch,
            bound: f64::NAN,
            integral_objective: None,
            outcome: NodeOutcome::Pruned,
        };
        let mut children = Vec::new();
        if self.prunable(node.parent_bound) {
            self.push_record(record);
            return children;
        }
        let relax = self.solve_with(&node.fixings);
        if node.parent.is_none() {
            self.root_status = Some(relax.status);
        }
        match relax.status {
            Status::Optimal => {}
            Status::Infeasible => {
                record.outcome = NodeOutcome::Infeasible;
                self.push_record(record);
                return children;
            }
            other => {
                debug!("node {} relaxation ended with {other:?} ({})", node.id, relax.stats.backend_status);
                record.outcome = NodeOutcome::Failed;
                self.push_record(record);
                // no usable bound here: keep the parent's and split on the
                // lowest free binary, so only fully fixed leaves can be lost
                let free = self.free_binaries(&node);
                if let Some(&v) = free.first() {
                    children.push(self.child(&node, node.parent_bound, v, true));
                    children.push(self.child(&node, node.parent_bound, v, false));
                } else if let Some(c) = self.refiner.and_then(|r| r.refine(&self.fixed_pattern(&node))) {
                    self.offer(c);
                } else {
                    warn!("node {} dropped after {other:?}", node.id);
                    self.incomplete = true;
                }
                return children;
            }
        }
        let bound = relax.objective;
        record.bound = bound;
        if self.prunable(bound) {
            self.push_record(record);
            return children;
        }

        // most fractional binary, ties to the lowest index
        let mut pick: Option<(Var, f64, f64)> = None;
        for &v in &self.binaries {
            let val = relax.x[v.0];
            let frac = (val - val.round()).abs();
            if frac > INTEGRALITY_TOL && pick.is_none_or(|(_, f, _)| frac > f) {
                pick = Some((v, frac, val));
            }
        }
        if let Some((v, _, val)) = pick {
            record.outcome = NodeOutcome::Branched;
            self.push_record(record);
            let up_first = val >= 0.5;
            let a = self.child(&node, bound, v, up_first);
            let b = self.child(&node, bound, v, !up_first);
            children.push(a);
            children.push(b);
            return children;
        }

        // integral relaxation
        record.outcome = NodeOutcome::Integral;
        let pattern: Vec<bool> = self.binaries.iter().map(|v| relax.x[v.0] > 0.5).collect();
        let candidate = match self.refiner {
            Some(r) => r.refine(&pattern),
            None => {
                let fixings: Vec<(Var, f64)> =
                    self.binaries.iter().zip(&pattern).map(|(&v, &on)| (v, if on { 1.0 } else { 0.0 })).collect();
                let exact = self.solve_with(&fixings);
                if exact.status == Status::Optimal {
                    Some(exact)
                } else {
                    Some(relax.clone())
                }
            }
        };
        let free = self.free_binaries(&node);
        match candidate {
            Some(c) if c.has_point() => {
                record.integral_objective = Some(c.objective);
                let gap = (self.cfg.rel_gap * c.objective.abs()).max(1e-9);
                let loose = c.objective > bound + gap;
                self.offer(c);
                if loose && !free.is_empty() {
                    // the relaxation is not exact at this pattern; split on
                    // the lowest free binary to tighten it
                    record.outcome = NodeOutcome::Branched;
                    let v = free[0];
                    let up_first = relax.x[v.0] >= 0.5;
                    let a = self.child(&node, bound, v, up_first);
                    let b = self.child(&node, bound, v, !up_first);
                    children.push(a);
                    children.push(b);
                }
            }
            _ => {
                if !free.is_empty() {
                    record.outcome = NodeOutcome::Branched;
                    let v = free[0];
                    let up_first = relax.x[v.0] >= 0.5;
                    let a = self.child(&node, bound, v, up_first);
                    let b = self.child(&node, bound, v, !up_first);
                    children.push(a);
                    children.push(b);
                }
            }
        }
        self.push_record(record);
        children
    }

    fn push_record(&mut self, record: NodeRecord) {
        if self.cfg.record_nodes {
            self.log.push(record);
        }
    }
}

/// Solves a mixed-binary conic program with the default backend.
pub fn solve_mixed(program: &ConicProgram, cfg: &SolverConfig) -> Solution {
    solve_mixed_with(&ClarabelBackend, program, cfg, None)
}

/// Solves a mixed-binary conic program with the given continuous backend and
/// an optional exact evaluator for integral patterns.
///
/// Returns `Optimal` with a proven relative gap of at most `cfg.rel_gap`,
/// `Infeasible` when no integral point exists, or `IterLimit` when the node
/// or time limit is reached or a subtree had to be dropped after a backend
/// failure; the best incumbent (if any) is attached in that case.
pub fn solve_mixed_with<B: ContinuousSolver + ?Sized>(
    backend: &B,
    program: &ConicProgram,
    cfg: &SolverConfig,
    refiner: Option<&dyn IntegralRefiner>,
) -> Solution {
    let start = Instant::now();
    if let Err(e) = program.validate() {
        return Solution::failed(Status::NumericalFailure, e.to_string());
    }
    let mut relaxed = program.clone();
    relaxed.relax_integrality();
    let mut search = Search {
        backend,
        refiner,
        base: program,
        relaxed,
        binaries: program.binaries(),
        cfg,
        incumbent: None,
        incomplete: false,
        root_status: None,
        iterations: 0,
        nodes: 0,
        next_id: 0,
        log: Vec::new(),
    };

    let root =
        Node { id: 0, parent: None, depth: 0, branch: None, fixings: Vec::new(), parent_bound: f64::NEG_INFINITY };

    let mut heap = BinaryHeap::new();
    let mut plunge: Option<Node> = Some(root);
    let mut hit_limit = false;
    loop {
        let node = match plunge.take() {
            Some(n) => n,
            None => match heap.pop() {
                Some(Queued { node, .. }) => node,
                None => break,
            },
        };
        if search.nodes >= cfg.node_limit || cfg.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() > t) {
            hit_limit = true;
            break;
        }
        let mut children = search.process(node).into_iter();
        if let Some(Status::Unbounded) = search.root_status.take() {
            let mut s = Solution::failed(Status::Unbounded, "root relaxation");
            s.stats.nodes = 1;
            s.stats.iterations = search.iterations;
            return s;
        }
        if let Some(first) = children.next() {
            plunge = Some(first);
        }
        for c in children {
            heap.push(Queued { key: c.parent_bound, node: c });
        }
    }

    let stats = SolveStats {
        iterations: search.iterations,
        nodes: search.nodes,
        seconds: start.elapsed().as_secs_f64(),
        max_residual: 0.0,
        backend_status: String::new(),
        node_log: std::mem::take(&mut search.log),
    };
    match search.incumbent.take() {
        Some(mut best) => {
            best.status = if hit_limit || search.incomplete { Status::IterLimit } else { Status::Optimal };
            best.row_duals = None;
            best.stats = SolveStats { max_residual: best.stats.max_residual, ..stats };
            best
        }
        None => {
            let status = if hit_limit || search.incomplete { Status::IterLimit } else { Status::Infeasible };
            Solution { stats, ..Solution::failed(status, "") }
        }
    }
}
