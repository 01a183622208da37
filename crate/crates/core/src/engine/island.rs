use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{BudgetSpec, EngineError, Entry, Protocol, Recorder, RunOptions, RunRecord};
use crate::geom::Task;
use crate::mutation::{Backend, Payload};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Migration {
    #[default]
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IslandConfig {
    pub num_islands: usize,
    /// Bins along the fitness axis; fitness in [0, 1] maps to equal-width bins.
    pub fitness_bins: usize,
    /// Bins along the size axis.
    pub size_bins: usize,
    /// Program characters per size bin. Simulated candidates use their
    /// family index directly.
    pub program_length_bucket: usize,
    pub migration: Migration,
}

impl Default for IslandConfig {
    fn default() -> Self {
        Self {
            num_islands: 4,
            fitness_bins: 10,
            size_bins: 10,
            program_length_bucket: 256,
            migration: Migration::None,
        }
    }
}

impl IslandConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.num_islands == 0 || self.fitness_bins == 0 || self.size_bins == 0 {
            return Err(EngineError::Config(
                "num_islands, fitness_bins and size_bins must be at least 1".into(),
            ));
        }
        if self.program_length_bucket == 0 {
            return Err(EngineError::Config("program_length_bucket must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cell_of(&self, payload: &Payload, fitness: f64) -> (usize, usize) {
        let fb = self.fitness_bins;
        let fit = if fitness.is_finite() && fitness > 0.0 {
            ((fitness * fb as f64).floor() as usize).min(fb - 1)
        } else {
            0
        };
        let raw = match payload {
            Payload::Program { source } => source.len() / self.program_length_bucket,
            Payload::Simulated(_) => payload.size_feature(),
        };
        (fit, raw.min(self.size_bins - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub fitness_bin: usize,
    pub size_bin: usize,
    /// Entry index of the occupant.
    pub entry: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Island {
    /// Occupied cells sorted by `(fitness_bin, size_bin)`.
    pub cells: Vec<Cell>,
    /// Entries generated on this island, in call order.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IslandState {
    pub islands: Vec<Island>,
}

impl IslandState {
    pub fn new(num_islands: usize) -> Self {
        Self {
            islands: vec![Island::default(); num_islands],
        }
    }

    /// Selection weights `1 / (1 + occupied cells)`.
    pub fn weights(&self) -> Vec<f64> {
        self.islands
            .iter()
            .map(|i| 1.0 / (1.0 + i.cells.len() as f64))
            .collect()
    }

    /// Places `entry` in its cell if the cell is empty or `fitness` strictly
    /// beats the occupant. Returns whether it was stored.
    pub fn insert(
        &mut self,
        island: usize,
        cell: (usize, usize),
        entry: usize,
        fitness: f64,
        fitness_of: impl Fn(usize) -> f64,
    ) -> bool {
        let cells = &mut self.islands[island].cells;
        match cells.binary_search_by_key(&cell, |c| (c.fitness_bin, c.size_bin)) {
            Ok(i) => {
                if fitness > fitness_of(cells[i].entry) {
                    cells[i].entry = entry;
                    true
                } else {
                    false
                }
            }
            Err(i) => {
                cells.insert(
                    i,
                    Cell {
                        fitness_bin: cell.0,
                        size_bin: cell.1,
                        entry,
                    },
                );
                true
            }
        }
    }
}

/// Per-trajectory island bookkeeping shared by the island protocol and
/// BaSE arms that use it as their parent sampler.
#[derive(Debug, Clone)]
pub(crate) struct IslandSampler {
    pub config: IslandConfig,
    pub state: IslandState,
    root_cell: (usize, usize),
    root_fitness: f64,
}

/// Parent choice for one call.
pub(crate) struct Pick {
    pub island: usize,
    pub parent: usize,
    pub history: Vec<usize>,
}

impl IslandSampler {
    pub fn new(config: IslandConfig, root: &Payload, root_fitness: f64) -> Self {
        Self {
            root_cell: config.cell_of(root, root_fitness),
            state: IslandState::new(config.num_islands),
            config,
            root_fitness,
        }
    }

    pub fn pick(&mut self, seed: u64, call: u64) -> Pick {
        let mut rng = rng::stream(seed, Purpose::Island, call);
        let island = WeightedIndex::new(self.state.weights())
            .expect("weights are positive")
            .sample(&mut rng);
        if self.state.islands[island].cells.is_empty() {
            self.state
                .insert(island, self.root_cell, 0, self.root_fitness, |_| f64::NEG_INFINITY);
        }
        let cells = &self.state.islands[island].cells;
        let parent = cells[rng.random_range(0..cells.len())].entry;
        Pick {
            island,
            parent,
            history: self.state.islands[island].members.clone(),
        }
    }

    /// Files a scored child under `island`; failed children are not archived.
    pub fn record(&mut self, entries: &[Entry], island: usize, entry: usize) {
        self.state.islands[island].members.push(entry);
        let child = &entries[entry];
        if child.failure.is_some() {
            return;
        }
        if let Some(p) = &child.payload {
            let cell = self.config.cell_of(p, child.fitness);
            self.state
                .insert(island, cell, entry, child.fitness, |i| entries[i].fitness);
        }
    }
}

/// Island protocol: each call picks an island by inverse coverage, a parent
/// uniformly from that island's archive, and produces one child.
pub fn run_island(
    task: Task,
    budget: BudgetSpec,
    config: &IslandConfig,
    backend: &dyn Backend,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    budget.validate()?;
    config.validate()?;
    let mut rec = Recorder::start(
        backend,
        Protocol::Island(config.clone()),
        task,
        budget,
        seed,
        opts,
    );
    let (payload, fitness) = match rec.initial() {
        Ok(x) => x,
        Err(e) => return Ok(rec.abort(e)),
    };
    let mut sampler = IslandSampler::new(config.clone(), &payload, fitness);
    rec.add_trajectory(payload, fitness);

    for _ in 0..budget.c {
        let call = rec.next_call();
        let pick = sampler.pick(seed, call);
        let traj = &rec.record.trajectories[0];
        let history = traj.history(pick.history.iter().copied());
        let parent_entry = &traj.entries[pick.parent];
        let result = rec.propose(
            parent_entry.payload.as_ref().expect("archived entries carry a payload"),
            parent_entry.fitness,
            &history,
            call,
        );
        let proposal = match result {
            Ok(p) => p,
            Err(e) => {
                rec.record.islands = Some(sampler.state);
                return Ok(rec.abort(e));
            }
        };
        let entry = rec.commit(0, pick.parent, call as u32, 0, Some(pick.island), proposal);
        let traj = &mut rec.record.trajectories[0];
        sampler.record(&traj.entries, pick.island, entry);
        traj.accept_if_better(entry);
    }
    rec.record.islands = Some(sampler.state);
    Ok(rec.finish(true))
}
