//! Searches for the proper coalition with the largest excess.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use parking_lot::Mutex;
use serde::Serialize;

use crate::coalition::{enumerate_coalitions, Coalition};
use crate::error::{Error, Result};
use crate::imputation::CharacteristicOracle;

/// Outcome of a max-excess search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessResult {
    pub coalition: Coalition,
    pub excess: f64,
    /// `v(coalition)`.
    pub value: f64,
    /// Search nodes processed.
    pub nodes: usize,
    /// Characteristic values requested (cached or not).
    pub evaluations: usize,
    /// False when a node limit stopped the search; the coalition is then the
    /// best one found.
    pub complete: bool,
}

/// `max_{C proper} v(C) − x(C)`.
pub trait MaxExcess {
    fn max_excess(&self, x: &[f64]) -> Result<ExcessResult>;
}

fn check_players(n: usize, x: &[f64]) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("a {n}-player game has no proper coalitions")));
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { what: "imputation".into(), expected: n, found: x.len() });
    }
    Ok(())
}

/// Brute force over every proper coalition.
pub struct EnumerationSearch<'a> {
    game: &'a dyn CharacteristicOracle,
}

impl<'a> EnumerationSearch<'a> {
    pub fn new(game: &'a dyn CharacteristicOracle) -> Self {
        EnumerationSearch { game }
    }
}

impl MaxExcess for EnumerationSearch<'_> {
    fn max_excess(&self, x: &[f64]) -> Result<ExcessResult> {
        let n = self.game.players();
        check_players(n, x)?;
        let all: Vec<Coalition> = enumerate_coalitions(n, true)?.collect();
        self.game.prefetch(&all)?;
        let mut best: Option<ExcessResult> = None;
        for &c in &all {
            let value = self.game.value(c)?;
            let e = value - c.sum(x);
            if best.as_ref().is_none_or(|b| e > b.excess) {
                best = Some(ExcessResult { coalition: c, excess: e, value, nodes: 0, evaluations: 0, complete: true });
            }
        }
        let mut best = best.expect("at least one proper coalition");
        best.nodes = all.len();
        best.evaluations = all.len();
        Ok(best)
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bound: f64,
    id: usize,
    /// Players below `depth` are decided; `inside` holds those included.
    inside: Coalition,
    depth: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap on bound, earlier nodes first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(other.id.cmp(&self.id))
    }
}

/// Best-first branch-and-bound over membership decisions, taken in player
/// order. A node fixes players `0..depth`; every coalition in its subtree
/// lies between `in` and `in ∪ free`. By superadditivity
/// `v(S) ≤ v(in ∪ free) − Σ_{j ∈ free∖S} v({j})`, so
///
/// `v(S) − x(S) ≤ v(in ∪ free) − x(in) − Σ_{j∈free} min(x_j, v({j}))`.
///
/// Each node evaluates `v(in ∪ free)`, which is itself a member of the
/// subtree and therefore a candidate. The bound is only valid for
/// superadditive games; [`EnumerationSearch`] covers the rest.
///
/// Coalitions evaluated by earlier calls are remembered and the best of them
/// under the new `x` seeds the incumbent, which matters inside a cutting-plane
/// loop where consecutive allocations are close.
pub struct MembershipSearch<'a> {
    game: &'a dyn CharacteristicOracle,
    node_limit: usize,
    seen: Mutex<Vec<(Coalition, f64)>>,
}

impl<'a> MembershipSearch<'a> {
    pub fn new(game: &'a dyn CharacteristicOracle) -> Self {
        MembershipSearch { game, node_limit: usize::MAX, seen: Mutex::new(Vec::new()) }
    }

    pub fn with_node_limit(mut self, limit: usize) -> Self {
        self.node_limit = limit;
        self
    }
}

impl MaxExcess for MembershipSearch<'_> {
    fn max_excess(&self, x: &[f64]) -> Result<ExcessResult> {
        let n = self.game.players();
        check_players(n, x)?;
        let grand = Coalition::grand(n);
        let singles: Vec<Coalition> = (0..n).map(Coalition::singleton).collect();
        self.game.prefetch(&singles)?;
        let single: Vec<f64> = singles.iter().map(|&c| self.game.value(c)).collect::<Result<_>>()?;
        let relief: Vec<f64> = (0..n).map(|j| x[j].min(single[j])).collect();
        // suffix sums of relief over undecided players
        let mut tail = vec![0.0; n + 1];
        for j in (0..n).rev() {
            tail[j] = tail[j + 1] + relief[j];
        }
        let free_of = |depth: usize| Coalition(grand.bits() & !((1u64 << depth) - 1));

        let mut evaluations = 0usize;
        let mut nodes = 0usize;
        let mut best: Option<ExcessResult> = None;
        let mut seen = self.seen.lock();
        for &(c, value) in seen.iter() {
            let e = value - c.sum(x);
            if best.as_ref().is_none_or(|b| e > b.excess) {
                best = Some(ExcessResult { coalition: c, excess: e, value, nodes: 0, evaluations: 0, complete: true });
            }
        }
        let mut fresh = Vec::new();
        let mut heap = BinaryHeap::new();
        let mut next_id = 0usize;

        let mut evaluate = |inside: Coalition, depth: usize, best: &mut Option<ExcessResult>| -> Result<f64> {
            let top = inside.union(free_of(depth));
            let value = self.game.value(top)?;
            evaluations += 1;
            if top.is_proper(n) {
                fresh.push((top, value));
                let e = value - top.sum(x);
                if best.as_ref().is_none_or(|b| e > b.excess) {
                    *best = Some(ExcessResult {
                        coalition: top,
                        excess: e,
                        value,
                        nodes: 0,
                        evaluations: 0,
                        complete: true,
                    });
                }
            }
            Ok(value - inside.sum(x) - tail[depth])
        };

        let bound = evaluate(Coalition::EMPTY, 0, &mut best)?;
        heap.push(Node { bound, id: next_id, inside: Coalition::EMPTY, depth: 0 });
        next_id += 1;
        let mut complete = true;
        while let Some(node) = heap.pop() {
            if best.as_ref().is_some_and(|b| node.bound <= b.excess) {
                break;
            }
            if nodes >= self.node_limit {
                complete = false;
                break;
            }
            nodes += 1;
            if node.depth == n {
                continue;
            }
            let d = node.depth;
            // include player d: same top coalition, tighter payment term
            let with = node.inside.with(d);
            let with_bound = node.bound + relief[d] - x[d];
            // exclude player d: a new top coalition
            let without_bound = evaluate(node.inside, d + 1, &mut best)?;
            for (inside, bound) in [(with, with_bound), (node.inside, without_bound)] {
                if best.as_ref().is_none_or(|b| bound > b.excess) && !(inside.is_empty() && d + 1 == n) {
                    heap.push(Node { bound, id: next_id, inside, depth: d + 1 });
                    next_id += 1;
                }
            }
        }
        let mut known: std::collections::HashSet<Coalition> = seen.iter().map(|&(c, _)| c).collect();
        for (c, v) in fresh {
            if known.insert(c) {
                seen.push((c, v));
            }
        }
        let mut best = best.ok_or_else(|| Error::InvalidArgument("no proper coalition was reached".into()))?;
        best.nodes = nodes;
        best.evaluations = evaluations;
        best.complete = complete;
        Ok(best)
    }
}
