use std::fmt;

use crate::error::{Error, Result};

/// Largest player count for which full enumeration is allowed.
pub const ENUMERATION_LIMIT: usize = 20;

/// Largest player count a [`Coalition`] bitmask can represent.
pub const MAX_PLAYERS: usize = 64;

/// Set of prosumer indices stored as a bitmask (bit `i` ⇔ prosumer `i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Coalition(pub u64);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn grand(n: usize) -> Coalition {
        assert!(n <= MAX_PLAYERS, "at most {MAX_PLAYERS} players");
        if n == 64 {
            Coalition(u64::MAX)
        } else {
            Coalition((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Coalition {
        Coalition(1u64 << i)
    }

    pub fn from_members(members: impl IntoIterator<Item = usize>) -> Coalition {
        members.into_iter().fold(Coalition::EMPTY, |c, i| c.with(i))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && (self.0 >> i) & 1 == 1
    }

    pub fn with(self, i: usize) -> Coalition {
        Coalition(self.0 | (1u64 << i))
    }

    pub fn without(self, i: usize) -> Coalition {
        Coalition(self.0 & !(1u64 << i))
    }

    pub fn union(self, other: Coalition) -> Coalition {
        Coalition(self.0 | other.0)
    }

    pub fn intersection(self, other: Coalition) -> Coalition {
        Coalition(self.0 & other.0)
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: Coalition) -> bool {
        self.0 & other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// `1 ≤ |C| ≤ n − 1` and no member outside `0..n`.
    pub fn is_proper(self, n: usize) -> bool {
        self.is_subset_of(Coalition::grand(n)) && !self.is_empty() && self.len() < n
    }

    /// Member indices in increasing order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Sum of `x[i]` over members.
    pub fn sum(self, x: &[f64]) -> f64 {
        self.members().map(|i| x[i]).sum()
    }
}

/// Shown with 1-based prosumer numbers, e.g. `{1,3}`.
impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        f.write_str("}")
    }
}

/// Serialised as its display form, e.g. `"{1,3}"`.
impl serde::Serialize for Coalition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// All subsets of `0..n` in increasing bitmask order; with `proper_only` the
/// empty and grand coalitions are skipped.
pub fn enumerate_coalitions(n: usize, proper_only: bool) -> Result<impl Iterator<Item = Coalition>> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: ENUMERATION_LIMIT, method: "enumeration" });
    }
    let full = 1u64 << n;
    let (lo, hi) = if proper_only { (1, full.saturating_sub(1)) } else { (0, full) };
    Ok((lo..hi.max(lo)).map(Coalition))
}
