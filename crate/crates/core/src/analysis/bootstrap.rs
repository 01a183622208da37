use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BootstrapError {
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("stratum {0} is empty")]
    EmptyStratum(usize),
    #[error("need at least one resample")]
    NoResamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStats {
    pub mean: f64,
    /// Standard deviation of the resampled means.
    pub se: f64,
    pub ci95: (f64, f64),
    pub iqm: f64,
    pub n: usize,
    pub resamples: usize,
}

/// Interquartile mean with fractional weights at the quartile boundaries.
pub fn iqm(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "iqm of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let (lo, hi) = (n / 4.0, 3.0 * n / 4.0);
    let mut total = 0.0;
    for (i, x) in v.iter().enumerate() {
        let w = ((i + 1) as f64).min(hi) - (i as f64).max(lo);
        if w > 0.0 {
            total += w * x;
        }
    }
    total / (hi - lo)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// Stratified bootstrap of the mean: each stratum is resampled with
/// replacement at its own size. Pass one stratum for the plain bootstrap.
pub fn bootstrap_stats<R: Rng + ?Sized>(
    strata: &[Vec<f64>],
    resamples: usize,
    rng: &mut R,
) -> Result<BootstrapStats, BootstrapError> {
    if let Some(i) = strata.iter().position(Vec::is_empty) {
        return Err(BootstrapError::EmptyStratum(i));
    }
    let all: Vec<f64> = strata.iter().flatten().copied().collect();
    if all.len() < 2 {
        return Err(BootstrapError::TooFewSamples(all.len()));
    }
    if resamples == 0 {
        return Err(BootstrapError::NoResamples);
    }
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut sum = 0.0;
            for s in strata {
                for _ in 0..s.len() {
                    sum += s[rng.random_range(0..s.len())];
                }
            }
            sum / n
        })
        .collect();
    // Shifting by the first mean keeps identical resamples at exactly zero spread.
    let shift = means[0];
    let bm = means.iter().map(|m| m - shift).sum::<f64>() / resamples as f64;
    let se = if resamples > 1 {
        (means.iter().map(|m| (m - shift - bm).powi(2)).sum::<f64>() / (resamples - 1) as f64).sqrt()
    } else {
        0.0
    };
    means.sort_by(f64::total_cmp);
    Ok(BootstrapStats {
        mean,
        se,
        ci95: (quantile_sorted(&means, 0.025), quantile_sorted(&means, 0.975)),
        iqm: iqm(&all),
        n: all.len(),
        resamples,
    })
}
