use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::SweepCell;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub c: u64,
    pub v_max: f64,
    pub argmax_t: u64,
    /// Mean fitness at `T = 1`, when that cell was run.
    pub best_of_n: Option<f64>,
    /// `v_max - best_of_n`; undefined without a `T = 1` cell.
    pub pen_bon: Option<f64>,
    pub depths: usize,
}

/// Per budget, the best mean fitness over depths and its gain over
/// best-of-N. Ties in the max go to the smallest `T`.
pub fn compute_envelope(cells: &[SweepCell]) -> Vec<EnvelopeRow> {
    let mut by_c: BTreeMap<u64, Vec<&SweepCell>> = BTreeMap::new();
    for cell in cells.iter().filter(|c| !c.fitness.is_empty()) {
        by_c.entry(cell.c).or_default().push(cell);
    }
    by_c.into_iter()
        .map(|(c, mut group)| {
            group.sort_by_key(|cell| cell.t);
            let (mut v_max, mut argmax_t) = (f64::NEG_INFINITY, 0);
            for cell in &group {
                if cell.mean() > v_max {
                    v_max = cell.mean();
                    argmax_t = cell.t;
                }
            }
            let best_of_n = group.iter().find(|cell| cell.t == 1).map(|cell| cell.mean());
            EnvelopeRow {
                c,
                v_max,
                argmax_t,
                best_of_n,
                pen_bon: best_of_n.map(|b| v_max - b),
                depths: group.len(),
            }
        })
        .collect()
}
