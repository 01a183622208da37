use std::sync::atomic::{AtomicUsize, Ordering};

use super::{BudgetSpec, EngineError, Protocol, Recorder, RunOptions, RunRecord};
use crate::geom::Task;
use crate::mutation::{Backend, BackendError, Proposal};

/// Depth-breadth search: `t` generations, each mutating the current best
/// `n` times. The parent changes only at generation boundaries and a child
/// is accepted only if it strictly beats the running best.
pub fn run_greedy(
    task: Task,
    budget: BudgetSpec,
    backend: &dyn Backend,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    budget.validate()?;
    let mut rec = Recorder::start(backend, Protocol::Greedy, task, budget, seed, opts);
    let (payload, fitness) = match rec.initial() {
        Ok(x) => x,
        Err(e) => return Ok(rec.abort(e)),
    };
    rec.add_trajectory(payload, fitness);

    for g in 1..=budget.t as u32 {
        let traj = &rec.record.trajectories[0];
        let parent = traj.best_accepted();
        let history = traj.history(1..traj.entries.len());
        let first_call = rec.next_call();
        let results = {
            let rec = &rec;
            let parent_entry = &traj.entries[parent];
            let parent_payload = parent_entry.payload.as_ref().expect("accepted entries carry a payload");
            let propose = |j: u64| rec.propose(parent_payload, parent_entry.fitness, &history, first_call + j);
            generate(budget.n, opts.max_inflight, backend.parallel(), propose)
        };

        let mut best_child: Option<(usize, f64)> = None;
        for (j, result) in results.into_iter().enumerate() {
            let proposal = match result {
                Ok(p) => p,
                Err(e) => return Ok(rec.abort(e)),
            };
            let entry = rec.commit(0, parent, g, j as u32, None, proposal);
            let f = rec.record.trajectories[0].entries[entry].fitness;
            if best_child.is_none_or(|(_, bf)| f > bf) {
                best_child = Some((entry, f));
            }
        }
        if let Some((entry, _)) = best_child {
            rec.record.trajectories[0].accept_if_better(entry);
        }
    }
    Ok(rec.finish(true))
}

/// Runs `n` proposals, concurrently when allowed, returning them in child order.
pub(crate) fn generate<F>(
    n: u64,
    max_inflight: usize,
    parallel: bool,
    propose: F,
) -> Vec<Result<Proposal, BackendError>>
where
    F: Fn(u64) -> Result<Proposal, BackendError> + Sync,
{
    let workers = (n as usize).min(max_inflight.max(1));
    if !parallel || workers <= 1 {
        return (0..n).map(&propose).collect();
    }
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Result<Proposal, BackendError>>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let j = next.fetch_add(1, Ordering::Relaxed);
                        if j as u64 >= n {
                            break;
                        }
                        done.push((j, propose(j as u64)));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (j, r) in h.join().expect("mutation worker panicked") {
                slots[j] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every child produced")).collect()
}
