use crate::coalition::{enumerate_coalitions, Coalition};
use crate::error::{Error, Result};
use crate::imputation::{CharacteristicOracle, SHAPLEY_LIMIT};

/// Exact Shapley value:
/// `φ_i = Σ_{C ∌ i} |C|!(N−|C|−1)!/N! · (v(C ∪ {i}) − v(C))`.
pub fn shapley(game: &dyn CharacteristicOracle) -> Result<Vec<f64>> {
    let n = game.players();
    if n > SHAPLEY_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: SHAPLEY_LIMIT, method: "Shapley" });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let all: Vec<Coalition> = enumerate_coalitions(n, false)?.collect();
    game.prefetch(&all)?;
    let values = all.iter().map(|&c| game.value(c)).collect::<Result<Vec<f64>>>()?;

    // weight[s] = s!(n−s−1)!/n! = 1 / (n · binom(n−1, s))
    let mut weight = vec![0.0; n];
    let mut binom = 1.0f64;
    for (s, w) in weight.iter_mut().enumerate() {
        *w = 1.0 / (n as f64 * binom);
        binom = binom * (n - 1 - s) as f64 / (s + 1) as f64;
    }

    let mut phi = vec![0.0; n];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for (mask, v) in values.iter().enumerate() {
            if mask & bit == 0 {
                acc += weight[mask.count_ones() as usize] * (values[mask | bit] - v);
            }
        }
        *p = acc;
    }
    Ok(phi)
}
