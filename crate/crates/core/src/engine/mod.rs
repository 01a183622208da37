//! Search protocols over a fixed call budget and the records they produce.

mod greedy;
mod island;

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Task;
use crate::mutation::{
    Backend, BackendError, Failure, HistoryEntry, Payload, Proposal, ProposalRequest, UsageRecord,
};

pub use greedy::run_greedy;
pub use island::{run_island, Cell, Island, IslandConfig, IslandState, Migration};
pub(crate) use greedy::generate;
pub(crate) use island::IslandSampler;

/// Total calls `c` split into `t` generations of `n` children.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub c: u64,
    pub t: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BudgetError {
    #[error("T and N must both be at least 1 (got T={t}, N={n})")]
    Zero { t: u64, n: u64 },
    #[error("T={t} does not divide C={c}")]
    NotDivisible { c: u64, t: u64 },
    #[error("C={c} is not T*N={t}*{n}")]
    Mismatch { c: u64, t: u64, n: u64 },
}

impl BudgetSpec {
    pub fn new(t: u64, n: u64) -> Result<Self, BudgetError> {
        if t == 0 || n == 0 {
            return Err(BudgetError::Zero { t, n });
        }
        Ok(Self { c: t * n, t, n })
    }

    /// Split `c` into depth `t`; `t` must divide `c`.
    pub fn from_depth(c: u64, t: u64) -> Result<Self, BudgetError> {
        if t == 0 || c == 0 {
            return Err(BudgetError::Zero { t, n: 0 });
        }
        if c % t != 0 {
            return Err(BudgetError::NotDivisible { c, t });
        }
        Self::new(t, c / t)
    }

    pub fn validate(&self) -> Result<(), BudgetError> {
        if self.t == 0 || self.n == 0 {
            return Err(BudgetError::Zero { t: self.t, n: self.n });
        }
        if self.t.checked_mul(self.n) != Some(self.c) {
            return Err(BudgetError::Mismatch { c: self.c, t: self.t, n: self.n });
        }
        Ok(())
    }

    /// Every depth `t` that divides `c`, ascending.
    pub fn divisors(c: u64) -> Vec<u64> {
        (1..=c).filter(|t| c % t == 0).collect()
    }
}

/// One scored candidate. Entry 0 of a trajectory is the initial program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub generation: u32,
    pub child: u32,
    /// 1-based call index; `None` for the initial program.
    pub call: Option<u64>,
    /// Index of the parent entry in the same trajectory.
    pub parent: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub island: Option<usize>,
    pub fitness: f64,
    pub accepted: bool,
    pub payload: Option<Payload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub entries: Vec<Entry>,
    pub running_best: f64,
}

impl Trajectory {
    fn rooted(payload: Payload, fitness: f64) -> Self {
        Self {
            entries: vec![Entry {
                generation: 0,
                child: 0,
                call: None,
                parent: None,
                island: None,
                fitness,
                accepted: true,
                payload: Some(payload),
                failure: None,
            }],
            running_best: fitness,
        }
    }

    /// Index of the accepted entry holding `running_best`.
    pub fn best_accepted(&self) -> usize {
        self.entries
            .iter()
            .rposition(|e| e.accepted)
            .expect("trajectory has a root")
    }

    /// Marks `entry` accepted if it strictly beats the running best.
    pub(crate) fn accept_if_better(&mut self, entry: usize) -> bool {
        let f = self.entries[entry].fitness;
        if f > self.running_best {
            self.entries[entry].accepted = true;
            self.running_best = f;
            true
        } else {
            false
        }
    }

    /// Scored children (not the root) as prompt history.
    pub(crate) fn history(&self, entries: impl IntoIterator<Item = usize>) -> Vec<HistoryEntry> {
        entries
            .into_iter()
            .filter_map(|i| {
                let e = &self.entries[i];
                e.call?;
                Some(HistoryEntry {
                    summary: e.payload.as_ref().map_or_else(String::new, Payload::summary),
                    score: e.fitness,
                })
            })
            .collect()
    }
}

/// One budgeted call and every usage record it produced (retries included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub index: u64,
    pub trajectory: usize,
    pub entry: usize,
    pub attempts: Vec<UsageRecord>,
    /// Best fitness seen anywhere in the run after this call.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Protocol {
    Greedy,
    Island(IslandConfig),
    Base(crate::base::BaseConfig),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Greedy => "greedy",
            Protocol::Island(_) => "island",
            Protocol::Base(_) => "base",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestRef {
    pub trajectory: usize,
    pub entry: usize,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub protocol: Protocol,
    pub task: Task,
    pub model_id: String,
    pub budget: BudgetSpec,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
    pub calls: Vec<CallRecord>,
    pub best: Option<BestRef>,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub started_unix_ms: u64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit: Option<crate::base::BanditTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub islands: Option<IslandState>,
}

impl RunRecord {
    /// Every usage record in call order, retries included.
    pub fn usage_records(&self) -> impl Iterator<Item = &UsageRecord> {
        self.calls.iter().flat_map(|c| c.attempts.iter())
    }

    pub fn final_fitness(&self) -> Option<f64> {
        self.best.map(|b| b.fitness)
    }

    /// Best-so-far fitness after each call.
    pub fn best_curve(&self) -> Vec<f64> {
        self.calls.iter().map(|c| c.best_so_far).collect()
    }

    pub fn entry(&self, r: BestRef) -> &Entry {
        &self.trajectories[r.trajectory].entries[r.entry]
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error("record has no scored candidates")]
    EmptyRecord,
    #[error("invalid protocol configuration: {0}")]
    Config(String),
}

/// Per-run execution settings that do not affect results.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub run_id: String,
    /// Upper bound on concurrent children within one generation.
    pub max_inflight: usize,
}

impl RunOptions {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            max_inflight: 16,
        }
    }
}

/// Global argmax over every scored entry; ties go to the earliest
/// `(generation, child)`, then the lowest trajectory.
pub fn select_best(record: &RunRecord) -> Result<(&Entry, f64), EngineError> {
    let best = best_ref(&record.trajectories).ok_or(EngineError::EmptyRecord)?;
    let e = record.entry(best);
    Ok((e, e.fitness))
}

pub fn best_ref(trajectories: &[Trajectory]) -> Option<BestRef> {
    let mut best: Option<(BestRef, (u32, u32, usize))> = None;
    for (ti, t) in trajectories.iter().enumerate() {
        for (ei, e) in t.entries.iter().enumerate() {
            let key = (e.generation, e.child, ti);
            let better = match &best {
                None => true,
                Some((b, bk)) => e.fitness > b.fitness || (e.fitness == b.fitness && key < *bk),
            };
            if better {
                best = Some((
                    BestRef {
                        trajectory: ti,
                        entry: ei,
                        fitness: e.fitness,
                    },
                    key,
                ));
            }
        }
    }
    best.map(|(b, _)| b)
}

/// Shared bookkeeping for all protocols: call numbering, usage, progress.
pub(crate) struct Recorder<'a> {
    pub backend: &'a dyn Backend,
    pub record: RunRecord,
    started: std::time::Instant,
}

impl<'a> Recorder<'a> {
    pub fn start(
        backend: &'a dyn Backend,
        protocol: Protocol,
        task: Task,
        budget: BudgetSpec,
        seed: u64,
        opts: &RunOptions,
    ) -> Self {
        let started_unix_ms = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        Self {
            backend,
            record: RunRecord {
                run_id: opts.run_id.clone(),
                protocol,
                task,
                model_id: backend.model_id().to_string(),
                budget,
                seed,
                trajectories: Vec::new(),
                calls: Vec::new(),
                best: None,
                complete: false,
                error: None,
                started_unix_ms,
                wall_ms: 0,
                bandit: None,
                islands: None,
            },
            started: std::time::Instant::now(),
        }
    }

    pub fn next_call(&self) -> u64 {
        self.record.calls.len() as u64 + 1
    }

    pub fn initial(&self) -> Result<(Payload, f64), BackendError> {
        self.backend.initial(self.record.task)
    }

    pub fn add_trajectory(&mut self, payload: Payload, fitness: f64) -> usize {
        self.record.trajectories.push(Trajectory::rooted(payload, fitness));
        self.record.trajectories.len() - 1
    }

    pub fn propose(
        &self,
        parent: &Payload,
        parent_fitness: f64,
        history: &[HistoryEntry],
        call_index: u64,
    ) -> Result<Proposal, BackendError> {
        self.backend.propose(&ProposalRequest {
            task: self.record.task,
            parent,
            parent_fitness,
            history,
            call_index,
            seed: self.record.seed,
        })
    }

    /// Appends a scored child and charges its call. Returns the entry index.
    pub fn commit(
        &mut self,
        trajectory: usize,
        parent: usize,
        generation: u32,
        child: u32,
        island: Option<usize>,
        proposal: Proposal,
    ) -> usize {
        let index = self.next_call();
        let traj = &mut self.record.trajectories[trajectory];
        traj.entries.push(Entry {
            generation,
            child,
            call: Some(index),
            parent: Some(parent),
            island,
            fitness: proposal.fitness,
            accepted: false,
            payload: proposal.payload,
            failure: proposal.failure,
        });
        let entry = traj.entries.len() - 1;
        let prev = self.record.calls.last().map_or_else(
            || self.roots_best(),
            |c| c.best_so_far,
        );
        let best_so_far = prev.max(proposal.fitness);
        self.record.calls.push(CallRecord {
            index,
            trajectory,
            entry,
            attempts: proposal.attempts,
            best_so_far,
        });
        tracing::info!(
            run = %self.record.run_id,
            call = index,
            fitness = proposal.fitness,
            running_best = best_so_far,
            "scored"
        );
        entry
    }

    fn roots_best(&self) -> f64 {
        self.record
            .trajectories
            .iter()
            .map(|t| t.entries[0].fitness)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn abort(mut self, err: BackendError) -> RunRecord {
        tracing::error!(run = %self.record.run_id, error = %err, "run aborted");
        self.record.error = Some(err.to_string());
        self.finish(false)
    }

    pub fn finish(mut self, complete: bool) -> RunRecord {
        self.record.complete = complete;
        self.record.best = best_ref(&self.record.trajectories);
        self.record.wall_ms = self.started.elapsed().as_millis() as u64;
        self.record
    }
}
