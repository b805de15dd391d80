//! Dividing the grand coalition's payoff.

mod benders;
mod misocp;
mod nucleolus;
mod search;
mod shapley;

use std::sync::Arc;

use serde::Serialize;

pub use benders::{least_core_lp, leastcore_benders, BendersConfig, BendersIteration, BendersLog, LeastCore};
pub use misocp::{MisocpSearch, RadiusEncoding, SubproblemModel};
pub use nucleolus::nucleolus;
pub use search::{EnumerationSearch, ExcessResult, MaxExcess, MembershipSearch};
pub use shapley::shapley;

use crate::coalition::{enumerate_coalitions, Coalition};
use crate::dispatch::{CharacteristicFunction, Market};
use crate::error::{Error, Result};

/// Core violations are reported above this excess.
pub const CORE_TOL: f64 = 1e-6;

/// Largest game accepted by the Shapley value and core checks.
pub const SHAPLEY_LIMIT: usize = 16;

/// Largest game accepted by the enumerative nucleolus.
pub const NUCLEOLUS_LIMIT: usize = 12;

/// A transferable-utility game `v: 2^N → ℝ` with `v(∅) = 0`.
pub trait CharacteristicOracle: Sync {
    fn players(&self) -> usize;

    fn value(&self, c: Coalition) -> Result<f64>;

    /// Hint that the given coalitions will be queried soon.
    fn prefetch(&self, _cs: &[Coalition]) -> Result<()> {
        Ok(())
    }
}

impl CharacteristicOracle for CharacteristicFunction {
    fn players(&self) -> usize {
        CharacteristicFunction::players(self)
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        CharacteristicFunction::value(self, c)
    }

    fn prefetch(&self, cs: &[Coalition]) -> Result<()> {
        CharacteristicFunction::prefetch(self, cs)
    }
}

impl<T: CharacteristicOracle + Send> CharacteristicOracle for Arc<T> {
    fn players(&self) -> usize {
        (**self).players()
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        (**self).value(c)
    }

    fn prefetch(&self, cs: &[Coalition]) -> Result<()> {
        (**self).prefetch(cs)
    }
}

/// A game given by an explicit table indexed by coalition bitmask.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGame {
    n: usize,
    values: Vec<f64>,
}

impl TableGame {
    /// `values[mask]` is `v` of the coalition with that bitmask; entry 0 is
    /// ignored.
    pub fn new(n: usize, mut values: Vec<f64>) -> Result<TableGame> {
        if values.len() != 1usize << n {
            return Err(Error::DimensionMismatch { what: "game table".into(), expected: 1 << n, found: values.len() });
        }
        values[0] = 0.0;
        Ok(TableGame { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(Coalition) -> f64) -> TableGame {
        let values = (0..1u64 << n).map(|m| if m == 0 { 0.0 } else { f(Coalition(m)) }).collect();
        TableGame { n, values }
    }

    /// Evaluates every coalition of `game` once.
    pub fn tabulate(game: &dyn CharacteristicOracle) -> Result<TableGame> {
        let n = game.players();
        let all: Vec<Coalition> = enumerate_coalitions(n, false)?.collect();
        game.prefetch(&all)?;
        let values = all.iter().map(|&c| game.value(c)).collect::<Result<Vec<_>>>()?;
        TableGame::new(n, values)
    }

    /// Three-player glove game: one left glove (player 1), two right gloves.
    pub fn glove() -> TableGame {
        TableGame::from_fn(3, |c| if c.contains(0) && (c.contains(1) || c.contains(2)) { 1.0 } else { 0.0 })
    }

    /// Three players, singletons 0, pairs 1, everyone 3.
    pub fn symmetric3() -> TableGame {
        TableGame::from_fn(3, |c| match c.len() {
            0 | 1 => 0.0,
            2 => 1.0,
            _ => 3.0,
        })
    }

    /// `v(C) = Σ_{i∈C} w_i`.
    pub fn additive(w: &[f64]) -> TableGame {
        TableGame::from_fn(w.len(), |c| c.sum(w))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Same game with players relabelled so that new player `perm[i]` plays
    /// the role of old player `i`.
    pub fn permuted(&self, perm: &[usize]) -> TableGame {
        let mut values = vec![0.0; self.values.len()];
        for (mask, &v) in self.values.iter().enumerate() {
            let image = Coalition::from_members(Coalition(mask as u64).members().map(|i| perm[i]));
            values[image.bits() as usize] = v;
        }
        TableGame { n: self.n, values }
    }
}

impl CharacteristicOracle for TableGame {
    fn players(&self) -> usize {
        self.n
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        self.values
            .get(c.bits() as usize)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("coalition {c} outside a {}-player game", self.n)))
    }
}

/// Attribution game for electricity-only credit: proper coalitions are
/// valued without data-sharing reductions while the grand coalition keeps
/// its full value, so the same total is divided by energy contributions only.
pub struct AttributionGame {
    full: CharacteristicFunction,
    without_data: CharacteristicFunction,
}

impl AttributionGame {
    pub fn new(full: CharacteristicFunction) -> Result<AttributionGame> {
        let market = Arc::new(Market::without_contributions(full.market())?);
        let without_data = CharacteristicFunction::new(market, full.mode(), full.config().clone());
        Ok(AttributionGame { full, without_data })
    }
}

impl CharacteristicOracle for AttributionGame {
    fn players(&self) -> usize {
        self.full.players()
    }

    fn value(&self, c: Coalition) -> Result<f64> {
        if c == Coalition::grand(self.players()) {
            self.full.value(c)
        } else {
            self.without_data.value(c)
        }
    }

    fn prefetch(&self, cs: &[Coalition]) -> Result<()> {
        let grand = Coalition::grand(self.players());
        let (g, rest): (Vec<Coalition>, Vec<Coalition>) = cs.iter().partition(|&&c| c == grand);
        self.full.prefetch(&g)?;
        self.without_data.prefetch(&rest)
    }
}

/// `v(C) − Σ_{i∈C} x_i`.
pub fn excess(game: &dyn CharacteristicOracle, x: &[f64], c: Coalition) -> Result<f64> {
    Ok(game.value(c)? - c.sum(x))
}

/// Every proper coalition with excess above `tol`, largest excess first
/// (ties in bitmask order).
pub fn check_core(game: &dyn CharacteristicOracle, x: &[f64], tol: f64) -> Result<Vec<(Coalition, f64)>> {
    let n = game.players();
    if n > SHAPLEY_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: SHAPLEY_LIMIT, method: "core check" });
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch { what: "imputation".into(), expected: n, found: x.len() });
    }
    let all: Vec<Coalition> = enumerate_coalitions(n, true)?.collect();
    game.prefetch(&all)?;
    let mut out = Vec::new();
    for c in all {
        let e = excess(game, x, c)?;
        if e > tol {
            out.push((c, e));
        }
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(out)
}

/// Largest excess over all proper coalitions, by enumeration.
pub fn max_excess(game: &dyn CharacteristicOracle, x: &[f64]) -> Result<(Coalition, f64)> {
    let r = EnumerationSearch::new(game).max_excess(x)?;
    Ok((r.coalition, r.excess))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Shapley,
    Nucleolus,
    LeastCore,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Shapley => "shapley",
            Method::Nucleolus => "nucleolus",
            Method::LeastCore => "leastcore",
        }
    }

    /// Whether the method's output is individually rational by construction
    /// (given a nonempty core for the least-core and nucleolus methods).
    pub fn guarantees_rationality(self) -> bool {
        !matches!(self, Method::Shapley)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shapley" => Ok(Method::Shapley),
            "nucleolus" => Ok(Method::Nucleolus),
            "leastcore" | "least-core" => Ok(Method::LeastCore),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}` (shapley, nucleolus, leastcore)"))),
        }
    }
}

/// Efficiency gap `|Σx − v(N)|`.
pub fn efficiency_gap(game: &dyn CharacteristicOracle, x: &[f64]) -> Result<f64> {
    let total = game.value(Coalition::grand(game.players()))?;
    Ok((x.iter().sum::<f64>() - total).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excess_examples() {
        let g = TableGame::glove();
        assert_eq!(excess(&g, &[1.0, 0.0, 0.0], Coalition::from_members([1, 2])).unwrap(), 0.0);
        let a = TableGame::additive(&[1.0, 2.0, 3.0]);
        assert_eq!(excess(&a, &[1.0, 2.0, 3.0], Coalition::singleton(1)).unwrap(), 0.0);
        let t = TableGame::from_fn(2, |c| if c.len() == 1 { 10.0 } else { 20.0 });
        assert_eq!(excess(&t, &[12.0, 8.0], Coalition::singleton(0)).unwrap(), -2.0);
    }

    #[test]
    fn core_check_on_glove() {
        let g = TableGame::glove();
        assert!(check_core(&g, &[1.0, 0.0, 0.0], CORE_TOL).unwrap().is_empty());
        let third = 1.0 / 3.0;
        let v = check_core(&g, &[third, third, third], CORE_TOL).unwrap();
        let names: Vec<String> = v.iter().map(|(c, _)| c.to_string()).collect();
        assert_eq!(names, ["{1,2}", "{1,3}"]);
        for (_, e) in v {
            assert!((e - third).abs() < 1e-12);
        }
        assert!(check_core(&TableGame::additive(&[1.0, -2.0]), &[1.0, -2.0], CORE_TOL).unwrap().is_empty());
    }

    #[test]
    fn permutation_relabels_values() {
        let g = TableGame::glove();
        let p = g.permuted(&[2, 0, 1]);
        // old player 1 (left glove) is now player 3
        assert_eq!(p.value(Coalition::from_members([2, 0])).unwrap(), 1.0);
        assert_eq!(p.value(Coalition::from_members([0, 1])).unwrap(), 0.0);
    }
}
