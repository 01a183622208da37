//! Statistics over sweep results: envelopes, the bilinear gap model and
//! its nested variants, closed-form depth optima, permutation tests,
//! bootstrap summaries and time-to-threshold.

mod bootstrap;
mod depth;
mod envelope;
mod fit;
mod ols;
mod permutation;
mod threshold;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::RunRecord;
use crate::geom::Task;

pub use bootstrap::{bootstrap_stats, iqm, quantile_sorted, BootstrapError, BootstrapStats};
pub use depth::{
    log_gap_on_budget, optimal_depth, plateau_halfwidth, CornerReason, DepthOptimum, Plateau,
};
pub use envelope::{compute_envelope, EnvelopeRow};
pub use fit::{
    fit_bilinear, nested_model_compare, FitError, FitOptions, FitResult, ModelKind, NestedModel,
    Response, MIN_CELLS, PER_SEED_GAP_FLOOR,
};
pub use permutation::{permutation_test_depth_gain, PermutationError, PermutationResult};
pub use threshold::{
    resample_indices, time_to_threshold, time_to_threshold_curves, Curves, Resampling,
    ThresholdResult,
};

/// Final fitness of every seed run at one `(model, task, C, T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub model_id: String,
    pub task: Task,
    pub c: u64,
    pub t: u64,
    pub n: u64,
    pub fitness: Vec<f64>,
}

impl SweepCell {
    pub fn mean(&self) -> f64 {
        if self.fitness.is_empty() {
            return f64::NAN;
        }
        self.fitness.iter().sum::<f64>() / self.fitness.len() as f64
    }
}

/// Groups completed greedy runs into cells, ordered by `(model, task, C, T)`.
pub fn cells_from_runs(runs: &[RunRecord]) -> Vec<SweepCell> {
    let mut map: BTreeMap<(String, Task, u64, u64), SweepCell> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.complete) {
        let Some(f) = r.final_fitness() else { continue };
        let key = (r.model_id.clone(), r.task, r.budget.c, r.budget.t);
        map.entry(key)
            .or_insert_with(|| SweepCell {
                model_id: r.model_id.clone(),
                task: r.task,
                c: r.budget.c,
                t: r.budget.t,
                n: r.budget.n,
                fitness: Vec::new(),
            })
            .fitness
            .push(f);
    }
    map.into_values().collect()
}

/// Per-seed fitness keyed by depth, for one budget.
pub fn per_seed_by_depth(cells: &[SweepCell], c: u64) -> BTreeMap<u64, Vec<f64>> {
    cells
        .iter()
        .filter(|cell| cell.c == c)
        .map(|cell| (cell.t, cell.fitness.clone()))
        .collect()
}
