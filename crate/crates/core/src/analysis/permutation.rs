use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PermutationError {
    #[error("no T=1 stratum")]
    MissingBestOfN,
    #[error("need at least two depths, got {0}")]
    TooFewDepths(usize),
    #[error("depth T={0} has no seeds")]
    EmptyDepth(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    /// Observed `max_T mean - mean(T=1)`.
    pub observed: f64,
    pub p: f64,
    pub shuffles: usize,
}

fn pen_bon(values: &[f64], bounds: &[(usize, usize)]) -> f64 {
    let means = bounds
        .iter()
        .map(|&(lo, hi)| values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64);
    let mut max = f64::NEG_INFINITY;
    let mut first = 0.0;
    for (i, m) in means.enumerate() {
        if i == 0 {
            first = m;
        }
        max = max.max(m);
    }
    max - first
}

/// Depth-gain permutation test: pooled per-seed fitness is reassigned
/// across depths (stratum sizes kept) and the gain recomputed, so the null
/// includes the selection bias of the max.
pub fn permutation_test_depth_gain<R: Rng + ?Sized>(
    per_seed: &BTreeMap<u64, Vec<f64>>,
    shuffles: usize,
    rng: &mut R,
) -> Result<PermutationResult, PermutationError> {
    if !per_seed.contains_key(&1) {
        return Err(PermutationError::MissingBestOfN);
    }
    if per_seed.len() < 2 {
        return Err(PermutationError::TooFewDepths(per_seed.len()));
    }
    let mut values = Vec::new();
    let mut bounds = Vec::new();
    for (&t, v) in per_seed {
        if v.is_empty() {
            return Err(PermutationError::EmptyDepth(t));
        }
        let lo = values.len();
        values.extend_from_slice(v);
        bounds.push((lo, values.len()));
    }
    let observed = pen_bon(&values, &bounds);
    let tol = 1e-12 * observed.abs().max(1.0);
    let mut hits = 0usize;
    for _ in 0..shuffles {
        values.shuffle(rng);
        if pen_bon(&values, &bounds) >= observed - tol {
            hits += 1;
        }
    }
    Ok(PermutationResult {
        observed,
        p: if shuffles == 0 { 1.0 } else { hits as f64 / shuffles as f64 },
        shuffles,
    })
}
