use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accounting::{flops_for_call, ModelSpec};
use crate::engine::RunRecord;
use crate::mutation::UsageError;

/// Which resampled run sets are examined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    MonteCarlo(usize),
    /// Every ordered resample (`n^n` sets); only for small `n`.
    Exhaustive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub tau: f64,
    /// Earliest qualifying 1-based call index; `None` when unreached.
    pub generation: Option<u64>,
    /// Mean cumulative FLOPs over runs at `generation`.
    pub flops: Option<f64>,
    /// Fraction of resamples reaching `tau` at `generation`.
    pub support: Option<f64>,
}

impl ThresholdResult {
    /// Table cell text; unreached thresholds print as `---`.
    pub fn generation_cell(&self) -> String {
        self.generation.map_or_else(|| "---".into(), |g| g.to_string())
    }

    pub fn flops_cell(&self) -> String {
        self.flops.map_or_else(|| "---".into(), |f| format!("{f:.3e}"))
    }
}

/// Per-run best-so-far curves and cumulative FLOPs, aligned by call index.
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub best: Vec<Vec<f64>>,
    pub flops: Vec<Vec<f64>>,
}

impl Curves {
    pub fn from_runs(runs: &[RunRecord], model: &ModelSpec) -> Result<Self, UsageError> {
        let mut best = Vec::with_capacity(runs.len());
        let mut flops = Vec::with_capacity(runs.len());
        for r in runs {
            best.push(r.best_curve());
            let mut acc: u128 = 0;
            let mut cum = Vec::with_capacity(r.calls.len());
            for call in &r.calls {
                for a in &call.attempts {
                    acc += flops_for_call(a, model)?;
                }
                cum.push(acc as f64);
            }
            flops.push(cum);
        }
        Ok(Self { best, flops })
    }

    fn len(&self) -> usize {
        self.best.iter().map(Vec::len).min().unwrap_or(0)
    }
}

/// Index sets of the resamples, drawn once so every `g` and `tau` sees the
/// same sets.
pub fn resample_indices<R: Rng + ?Sized>(n: usize, how: Resampling, rng: &mut R) -> Vec<Vec<usize>> {
    match how {
        Resampling::MonteCarlo(m) => (0..m)
            .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
            .collect(),
        Resampling::Exhaustive => {
            let total = n.checked_pow(n as u32).expect("exhaustive resampling is for small n");
            (0..total)
                .map(|mut k| {
                    (0..n)
                        .map(|_| {
                            let d = k % n;
                            k /= n;
                            d
                        })
                        .collect()
                })
                .collect()
        }
    }
}

/// Earliest call index at which at least `quantile` of resampled run sets
/// have mean best-so-far fitness `>= tau`.
pub fn time_to_threshold_curves(
    curves: &Curves,
    taus: &[f64],
    quantile: f64,
    sets: &[Vec<usize>],
) -> Vec<ThresholdResult> {
    let len = curves.len();
    let mut out: Vec<ThresholdResult> = taus
        .iter()
        .map(|&tau| ThresholdResult {
            tau,
            generation: None,
            flops: None,
            support: None,
        })
        .collect();
    if curves.best.is_empty() || sets.is_empty() {
        return out;
    }
    let runs = curves.best.len();
    let mut set_means = vec![0.0; sets.len()];
    for g in 0..len {
        for (m, set) in set_means.iter_mut().zip(sets) {
            *m = set.iter().map(|&i| curves.best[i][g]).sum::<f64>() / set.len() as f64;
        }
        let mut pending = false;
        for r in out.iter_mut().filter(|r| r.generation.is_none()) {
            let reached = set_means.iter().filter(|&&m| m >= r.tau).count();
            let frac = reached as f64 / sets.len() as f64;
            if frac >= quantile {
                r.generation = Some(g as u64 + 1);
                r.flops = Some(curves.flops.iter().map(|f| f[g]).sum::<f64>() / runs as f64);
                r.support = Some(frac);
            } else {
                pending = true;
            }
        }
        if !pending {
            break;
        }
    }
    out
}

/// Time-to-threshold over completed runs sharing one configuration.
pub fn time_to_threshold<R: Rng + ?Sized>(
    runs: &[RunRecord],
    model: &ModelSpec,
    taus: &[f64],
    quantile: f64,
    how: Resampling,
    rng: &mut R,
) -> Result<Vec<ThresholdResult>, UsageError> {
    let curves = Curves::from_runs(runs, model)?;
    let sets = resample_indices(runs.len(), how, rng);
    Ok(time_to_threshold_curves(&curves, taus, quantile, &sets))
}
