//! Exhaustive nearest-neighbour retrieval between paired modalities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, PairedConfig};
use crate::losses::batch_loss_exact;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Query `U_i`, search among all `V_j`.
    UToV,
    /// Query `V_i`, search among all `U_j`.
    VToU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub direction: Direction,
    pub success_fraction: f64,
    /// Queries whose partner is not among the best matches.
    pub failures: Vec<usize>,
    /// Every successful query had its partner as the only best match.
    pub unique: bool,
}

/// For every query, success iff its partner attains the maximal inner product.
/// Ties count as successes but clear `unique`.
pub fn nn_retrieve(pair: &PairedConfig, direction: Direction) -> RetrievalReport {
    let n = pair.count();
    let (queries, keys) = match direction {
        Direction::UToV => (&pair.u, &pair.v),
        Direction::VToU => (&pair.v, &pair.u),
    };
    // (success, tie) per query.
    let outcome = par::map_indices(n, |i| {
        let q = queries.row(i);
        let own = dot(q, keys.row(i));
        let mut tie = false;
        for j in (0..n).filter(|&j| j != i) {
            let s = dot(q, keys.row(j));
            if s > own {
                return (false, false);
            }
            tie |= s == own;
        }
        (true, tie)
    });
    let failures: Vec<usize> = (0..n).filter(|&i| !outcome[i].0).collect();
    RetrievalReport {
        direction,
        success_fraction: if n == 0 { 1.0 } else { 1.0 - failures.len() as f64 / n as f64 },
        unique: outcome.iter().all(|&(ok, tie)| !ok || !tie),
        failures,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Expected batch loss in units of `log 2`.
    pub xi_loss: f64,
    /// Guaranteed retrieval fraction `max(0, 1 - N xi / (B (B - 1)))`.
    pub bound_fraction: f64,
    /// Smaller of the two retrieval success fractions.
    pub actual_fraction: f64,
    pub holds: bool,
}

/// Compares retrieval in both directions against the guarantee implied by the
/// expected loss of a random batch of `batch` distinct pairs.
pub fn robustness_check(pair: &PairedConfig, t: f64, b: f64, batch: usize) -> Result<RobustnessReport> {
    let n = pair.count();
    let nf = n as f64;
    let bf = batch as f64;
    if !(bf > nf.sqrt() && batch < n) {
        return Err(Error::InvalidBatch { batch, count: n });
    }
    let xi_loss = batch_loss_exact(pair, t, b, batch)? / std::f64::consts::LN_2;
    let bound_fraction = (1.0 - nf * xi_loss / (bf * (bf - 1.0))).max(0.0);
    let actual_fraction = nn_retrieve(pair, Direction::UToV)
        .success_fraction
        .min(nn_retrieve(pair, Direction::VToU).success_fraction);
    Ok(RobustnessReport {
        xi_loss,
        bound_fraction,
        actual_fraction,
        holds: actual_fraction >= bound_fraction - 1e-12,
    })
}
