//! Run units, backends, and the resumable worker pool.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{Context, Result};
use evobudget::base::{run_base, BaseConfig, PolicyKind};
use evobudget::engine::{run_greedy, run_island, BudgetSpec, RunOptions, RunRecord};
use evobudget::mutation::{
    Backend, ChatClient, EndpointConfig, FamilyModel, InflightLimiter, LlmBackend, Sandbox,
    SimulatedBackend,
};
use evobudget::store::{Archive, Manifest};

use crate::config::{BackendConfig, ExperimentConfig, ENV_API_KEY};

/// One seeded run.
#[derive(Debug, Clone, PartialEq)]
pub enum Unit {
    Greedy { budget: BudgetSpec, seed: u64 },
    Island { budget: BudgetSpec, seed: u64 },
    Base { policy: PolicyKind, seed: u64 },
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

impl Unit {
    /// Deterministic id, e.g. `greedy-cp-simulated-C64-T8-s3`.
    pub fn run_id(&self, cfg: &ExperimentConfig) -> String {
        let task = cfg.task.key();
        let model = slug(&cfg.model.id);
        match self {
            Unit::Greedy { budget, seed } => {
                format!("greedy-{task}-{model}-C{}-T{}-s{seed}", budget.c, budget.t)
            }
            Unit::Island { budget, seed } => {
                format!("island-{task}-{model}-C{}-T{}-s{seed}", budget.c, budget.t)
            }
            Unit::Base { policy, seed } => format!(
                "base-{policy}-{task}-{model}-C{}-K{}-s{seed}",
                cfg.base.budget, cfg.base.k
            ),
        }
    }

    fn execute(&self, cfg: &ExperimentConfig, backend: &dyn Backend, opts: &RunOptions) -> Result<RunRecord> {
        let record = match self {
            Unit::Greedy { budget, seed } => run_greedy(cfg.task, *budget, backend, *seed, opts)?,
            Unit::Island { budget, seed } => {
                run_island(cfg.task, *budget, &cfg.island.archive, backend, *seed, opts)?
            }
            Unit::Base { policy, seed } => {
                let b = &cfg.base;
                let config = BaseConfig {
                    k: b.k,
                    policy: b.policy(*policy),
                    sampler: b.sampler.clone(),
                    batch: b.batch,
                };
                run_base(cfg.task, b.budget, &config, backend, *seed, opts)?
            }
        };
        Ok(record)
    }
}

pub fn sweep_units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let mut units = Vec::new();
    for budget in cfg.sweep.grid() {
        for &seed in &cfg.seeds {
            units.push(Unit::Greedy { budget, seed });
        }
    }
    units
}

pub fn island_units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let budget = cfg.island.budget_spec();
    cfg.seeds.iter().map(|&seed| Unit::Island { budget, seed }).collect()
}

pub fn base_units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let mut units = Vec::new();
    for &policy in &cfg.base.policies {
        for &seed in &cfg.seeds {
            units.push(Unit::Base { policy, seed });
        }
    }
    units
}

/// The backend described by `cfg`. Scratch space for candidate programs
/// lives under the archive root.
pub fn build_backend(cfg: &ExperimentConfig, archive: &Archive) -> Result<Box<dyn Backend>> {
    match &cfg.backend {
        BackendConfig::Simulate {
            family_model,
            usage,
        } => {
            let model = family_model
                .clone()
                .unwrap_or_else(|| FamilyModel::for_task(cfg.task));
            let mut backend = SimulatedBackend::new(model)?;
            backend.usage = usage.clone();
            backend.model_id = cfg.model.id.clone();
            Ok(Box::new(backend))
        }
        BackendConfig::Endpoint {
            base_url,
            framework,
            sampling,
            timeout_s,
            max_retries,
        } => {
            let mut endpoint = EndpointConfig::new(base_url.clone(), cfg.model.id.clone());
            endpoint.api_key = std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty());
            endpoint.timeout_s = *timeout_s;
            endpoint.max_retries = *max_retries;
            let sandbox = Sandbox::new(cfg.sandbox.clone(), archive.root().join("scratch"))
                .context("starting the sandbox")?;
            let limiter = InflightLimiter::new(cfg.run.max_inflight);
            let mut backend = LlmBackend::new(ChatClient::new(endpoint), sandbox, limiter);
            backend.framework = *framework;
            backend.sampling = sampling.clone();
            Ok(Box::new(backend))
        }
    }
}

/// Records the resolved config; refuses an archive made with another one.
pub fn ensure_manifest(archive: &Archive, cfg: &ExperimentConfig) -> Result<Manifest> {
    let manifest = Manifest::new(cfg.to_table(), cfg.seeds.clone());
    archive
        .ensure_manifest(&manifest)
        .context("the experiment root was created with a different config")?;
    Ok(manifest)
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct Outcome {
    pub ran: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

impl Outcome {
    pub fn ok(&self) -> bool {
        self.failed.is_empty()
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} run(s) executed, {} already complete, {} failed",
            self.ran.len(),
            self.skipped.len(),
            self.failed.len()
        );
        for (id, err) in &self.failed {
            s.push_str(&format!("\n  {id}: {err}"));
        }
        s
    }
}

/// Runs every unit not already complete in the archive, `cfg.run.workers`
/// at a time. Incomplete leftovers from an interrupted run are replaced.
/// A failing unit does not stop the others.
pub fn execute(archive: &Archive, cfg: &ExperimentConfig, units: &[Unit], backend: &dyn Backend) -> Outcome {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<bool, String>)>> = Mutex::new(Vec::new());
    let workers = cfg.run.workers.min(units.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(unit) = units.get(i) else { break };
                let r = run_one(archive, cfg, unit, backend).map_err(|e| format!("{e:#}"));
                results.lock().unwrap().push((i, r));
            });
        }
    });

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    let mut out = Outcome::default();
    for (i, r) in results {
        let id = units[i].run_id(cfg);
        match r {
            Ok(true) => out.ran.push(id),
            Ok(false) => out.skipped.push(id),
            Err(e) => out.failed.push((id, e)),
        }
    }
    out
}

/// `Ok(false)` when the run was already complete.
fn run_one(archive: &Archive, cfg: &ExperimentConfig, unit: &Unit, backend: &dyn Backend) -> Result<bool> {
    let run_id = unit.run_id(cfg);
    if archive.is_complete(&run_id)? {
        return Ok(false);
    }
    if archive.run_path(&run_id).exists() {
        tracing::info!(run = %run_id, "replacing incomplete run");
        archive.discard_run(&run_id)?;
    }
    let opts = RunOptions {
        run_id: run_id.clone(),
        max_inflight: cfg.run.max_inflight,
    };
    tracing::info!(run = %run_id, "starting");
    let record = unit.execute(cfg, backend, &opts)?;
    archive.write_run(&record)?;
    if !record.complete {
        anyhow::bail!(
            "run stopped early: {}",
            record.error.as_deref().unwrap_or("unknown error")
        );
    }
    tracing::info!(run = %run_id, best = record.best.map(|b| b.fitness), "finished");
    Ok(true)
}
