use crate::error::{Error, Result};

use super::coalition::{enumerate_coalitions, EXACT_LIMIT};
use super::game::CoalitionGame;

/// Shapley values from the classical subset formula
/// `φ_i = Σ_{S ⊆ D\{i}} |S|! (d-|S|-1)! / d! · [V(S ∪ {i}) − V(S)]`,
/// evaluating the game on all `2^d` coalitions.
pub fn brute_force_shapley<G: CoalitionGame + ?Sized>(game: &G) -> Result<Vec<f64>> {
    let d = game.n_players();
    if d > EXACT_LIMIT {
        return Err(Error::TooManyFeatures {
            features: d,
            limit: EXACT_LIMIT,
        });
    }
    // enumerate_coalitions orders by mask, so values[mask] is V(mask).
    let values = game.evaluate(&enumerate_coalitions(d)?)?;

    // weight[s] = s! (d-s-1)! / d!, built as 1 / (d * C(d-1, s)).
    let weight: Vec<f64> = (0..d)
        .map(|s| {
            let choose = (0..s).fold(1.0, |acc, j| acc * (d - 1 - j) as f64 / (j + 1) as f64);
            1.0 / (d as f64 * choose)
        })
        .collect();

    let mut phi = vec![0.0; d];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        for mask in 0..(1usize << d) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            *p += weight[s] * (values[mask | bit] - values[mask]);
        }
    }
    Ok(phi)
}
