//! Planted sweep surfaces and threshold oracles.

use evobudget::analysis::{Curves, FitOptions, FitResult, SweepCell};
use evobudget::geom::Task;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn planted(beta0: f64, a: f64, b: f64, c: f64) -> impl Fn(f64, f64) -> f64 {
    move |t: f64, n: f64| beta0 + a * t.ln() + b * n.ln() + c * t.ln() * n.ln()
}

/// Power-of-two grid C in {8..512}, every power-of-two T.
pub fn grid(log_gap: impl Fn(f64, f64) -> f64, seeds: usize, noise: f64, rng: &mut ChaCha8Rng) -> Vec<SweepCell> {
    let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let mut cells = Vec::new();
    for ce in 3..=9u32 {
        let c = 1u64 << ce;
        for te in 0..=ce {
            let t = 1u64 << te;
            let n = c / t;
            let v = 1.0 - log_gap(t as f64, n as f64).exp();
            let fitness = (0..seeds)
                .map(|_| if noise > 0.0 { v + normal.sample(rng) } else { v })
                .collect();
            cells.push(SweepCell {
                model_id: "m".into(),
                task: Task::MinMaxDist,
                c,
                t,
                n,
                fitness,
            });
        }
    }
    cells
}

pub fn no_perm() -> FitOptions {
    FitOptions {
        shuffles: 0,
        ..FitOptions::default()
    }
}

pub fn fit_of(beta0: f64, a: f64, b: f64, c: f64) -> FitResult {
    FitResult {
        beta0,
        a,
        b,
        c,
        r2: 1.0,
        p_c: None,
        p_c_t: 0.0,
        n_cells: 0,
        n_obs: 0,
    }
}

pub fn curves(best: Vec<Vec<f64>>) -> Curves {
    let flops = best
        .iter()
        .map(|b| (1..=b.len()).map(|g| g as f64 * 10.0).collect())
        .collect();
    Curves { best, flops }
}

/// Direct enumeration: for every g, count ordered resamples (n^n) whose
/// mean running best reaches tau.
pub fn exhaustive_oracle(best: &[Vec<f64>], tau: f64, q: f64) -> Option<u64> {
    let n = best.len();
    let total = n.pow(n as u32);
    for g in 0..best[0].len() {
        let mut hit = 0;
        for code in 0..total {
            let mut k = code;
            let mut s = 0.0;
            for _ in 0..n {
                s += best[k % n][g];
                k /= n;
            }
            if s / n as f64 >= tau {
                hit += 1;
            }
        }
        if hit as f64 / total as f64 >= q {
            return Some(g as u64 + 1);
        }
    }
    None
}

pub fn monotone_curves(rng: &mut ChaCha8Rng, runs: usize, calls: usize) -> Vec<Vec<f64>> {
    (0..runs)
        .map(|_| {
            let mut v: f64 = rng.random_range(0.0..0.3);
            (0..calls)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        v = (v + rng.random_range(0.0..0.2)).min(1.0);
                    }
                    v
                })
                .collect()
        })
        .collect()
}

