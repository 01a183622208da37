//! Bandit allocation of calls across K parallel trajectories.
//!
//! The first K calls seed one arm each from the bare task prompt; every
//! later call goes to the arm chosen by the policy, which extends that
//! arm's own trajectory through its parent sampler.

mod policy;

use serde::{Deserialize, Serialize};

pub use policy::{
    select_arm, update_arm, PolicyConfig, PolicyError, PolicyKind, ResolvedPolicy, ThompsonPrior,
};

use crate::engine::{
    generate, BudgetSpec, EngineError, IslandConfig, IslandSampler, Protocol, Recorder,
    RunOptions, RunRecord,
};
use crate::geom::Task;
use crate::mutation::{Backend, BackendError};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub index: usize,
    pub pulls: u64,
    pub rewards: Vec<f64>,
    pub running_best: f64,
    /// Trajectory index in the run record.
    pub trajectory: usize,
    /// EXP3.P log weight.
    pub log_weight: f64,
}

impl ArmState {
    pub fn new(index: usize, trajectory: usize) -> Self {
        Self {
            index,
            pulls: 0,
            rewards: Vec::new(),
            running_best: f64::NEG_INFINITY,
            trajectory,
            log_weight: 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        if self.rewards.is_empty() {
            0.0
        } else {
            self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
        }
    }

    pub fn observe(&mut self, reward: f64) {
        self.pulls += 1;
        self.rewards.push(reward);
        self.running_best = self.running_best.max(reward);
    }
}

/// How an arm picks the parent for its next call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParentSampler {
    /// Mutate the arm's running best (single-child generations).
    #[default]
    Greedy,
    Island(IslandConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub k: usize,
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sampler: ParentSampler,
    /// Decisions taken per round from one statistics snapshot. 1 is the
    /// sequential loop; larger values trade fidelity for throughput.
    #[serde(default = "one")]
    pub batch: usize,
}

fn one() -> usize {
    1
}

impl BaseConfig {
    pub fn new(k: usize, policy: PolicyConfig) -> Self {
        Self {
            k,
            policy,
            sampler: ParentSampler::Greedy,
            batch: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub call: u64,
    pub arm: usize,
    pub reward: f64,
    /// Per-arm policy view at decision time: UCB indices, EXP3.P
    /// probabilities or Thompson posterior means. Empty for random.
    pub snapshot: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditTrace {
    pub policy: ResolvedPolicy,
    pub decisions: Vec<Decision>,
    pub arms: Vec<ArmState>,
}

impl BanditTrace {
    pub fn pulls(&self) -> Vec<u64> {
        self.arms.iter().map(|a| a.pulls).collect()
    }
}

fn snapshot(policy: &ResolvedPolicy, arms: &[ArmState], t: u64) -> Vec<f64> {
    match policy.kind {
        PolicyKind::Ucb => arms.iter().map(|a| policy.ucb_index(a, t)).collect(),
        PolicyKind::Exp3p => policy.exp3p_probabilities(arms),
        PolicyKind::Thompson => arms
            .iter()
            .map(|a| policy.thompson.posterior(&a.rewards).0)
            .collect(),
        PolicyKind::Random => Vec::new(),
    }
}

enum ArmSampler {
    Greedy,
    Island(Box<IslandSampler>),
}

/// K arms rooted at the initial program, one seeding call each from the
/// bare task prompt. Returns the arms and the record of those K calls.
pub fn init_arms(
    task: Task,
    k: usize,
    backend: &dyn Backend,
    seed: u64,
) -> Result<(Vec<ArmState>, RunRecord), BackendError> {
    let opts = RunOptions::new(format!("init-{task}-k{k}-s{seed}"));
    let budget = BudgetSpec { c: k as u64, t: 1, n: k as u64 };
    let config = BaseConfig::new(k, PolicyConfig::default());
    let mut rec = Recorder::start(backend, Protocol::Base(config), task, budget, seed, &opts);
    let arms = seed_arms(&mut rec, k, opts.max_inflight)?;
    Ok((arms, rec.finish(true)))
}

/// Calls are numbered `1..=K` in arm order.
fn seed_arms(
    rec: &mut Recorder<'_>,
    k: usize,
    max_inflight: usize,
) -> Result<Vec<ArmState>, BackendError> {
    let (payload, fitness) = rec.initial()?;
    let trajectories: Vec<usize> = (0..k)
        .map(|_| rec.add_trajectory(payload.clone(), fitness))
        .collect();
    let first = rec.next_call();
    let results = {
        let rec = &*rec;
        generate(k as u64, max_inflight, rec.backend.parallel(), |i| {
            rec.propose(&payload, fitness, &[], first + i)
        })
    };
    let mut arms = Vec::with_capacity(k);
    for (i, result) in results.into_iter().enumerate() {
        let proposal = result?;
        let traj = trajectories[i];
        let entry = rec.commit(traj, 0, 1, 0, None, proposal);
        let t = &mut rec.record.trajectories[traj];
        t.accept_if_better(entry);
        let mut arm = ArmState::new(i, traj);
        arm.observe(t.entries[entry].fitness);
        arms.push(arm);
    }
    Ok(arms)
}

/// Runs BaSE with `c` total calls, the K seeding calls included.
pub fn run_base(
    task: Task,
    c: u64,
    config: &BaseConfig,
    backend: &dyn Backend,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunRecord, EngineError> {
    let k = config.k;
    if k == 0 || k as u64 > c {
        return Err(EngineError::Config(format!("need 1 <= K <= C, got K={k}, C={c}")));
    }
    if config.batch == 0 {
        return Err(EngineError::Config("batch must be at least 1".into()));
    }
    if let ParentSampler::Island(ic) = &config.sampler {
        ic.validate()?;
    }
    let policy = config
        .policy
        .resolve(k, c)
        .map_err(|e| EngineError::Config(e.to_string()))?;
    let budget = BudgetSpec { c, t: c, n: 1 };
    let mut rec = Recorder::start(backend, Protocol::Base(config.clone()), task, budget, seed, opts);
    let mut trace = BanditTrace {
        policy,
        decisions: Vec::new(),
        arms: Vec::new(),
    };

    let mut arms = match seed_arms(&mut rec, k, opts.max_inflight) {
        Ok(a) => a,
        Err(e) => return Ok(rec.abort(e)),
    };
    let mut samplers: Vec<ArmSampler> = arms
        .iter()
        .map(|arm| match &config.sampler {
            ParentSampler::Greedy => ArmSampler::Greedy,
            ParentSampler::Island(ic) => {
                let t = &rec.record.trajectories[arm.trajectory];
                let root = &t.entries[0];
                let mut s = IslandSampler::new(
                    ic.clone(),
                    root.payload.as_ref().expect("root has a payload"),
                    root.fitness,
                );
                // The seeding child joins a fresh island like any other call.
                let pick = s.pick(seed, arm.index as u64 + 1);
                s.record(&t.entries, pick.island, 1);
                ArmSampler::Island(Box::new(s))
            }
        })
        .collect();

    while rec.next_call() <= c {
        let first = rec.next_call();
        let round = (config.batch as u64).min(c - first + 1);
        let mut plan = Vec::with_capacity(round as usize);
        for j in 0..round {
            let call = first + j;
            let mut prng = rng::stream(seed, Purpose::Policy, call);
            let snap = snapshot(&policy, &arms, call);
            let arm = select_arm(&policy, &arms, call, &mut prng);
            let ti = arms[arm].trajectory;
            let t = &rec.record.trajectories[ti];
            let (parent, island, history) = match &mut samplers[arm] {
                ArmSampler::Greedy => (t.best_accepted(), None, t.history(1..t.entries.len())),
                ArmSampler::Island(s) => {
                    let pick = s.pick(seed, call);
                    (pick.parent, Some(pick.island), t.history(pick.history))
                }
            };
            plan.push((call, arm, snap, parent, island, history));
        }

        let results = {
            let rec = &rec;
            let plan = &plan;
            generate(round, opts.max_inflight, backend.parallel(), |j| {
                let (call, arm, _, parent, _, history) = &plan[j as usize];
                let e = &rec.record.trajectories[arms[*arm].trajectory].entries[*parent];
                rec.propose(
                    e.payload.as_ref().expect("parents carry a payload"),
                    e.fitness,
                    history,
                    *call,
                )
            })
        };

        for ((call, arm, snap, parent, island, _), result) in plan.into_iter().zip(results) {
            let proposal = match result {
                Ok(p) => p,
                Err(e) => {
                    trace.arms = arms;
                    rec.record.bandit = Some(trace);
                    return Ok(rec.abort(e));
                }
            };
            let ti = arms[arm].trajectory;
            let generation = arms[arm].pulls as u32 + 1;
            let entry = rec.commit(ti, parent, generation, 0, island, proposal);
            let t = &mut rec.record.trajectories[ti];
            if let ArmSampler::Island(s) = &mut samplers[arm] {
                s.record(&t.entries, island.expect("island sampler picks an island"), entry);
            }
            t.accept_if_better(entry);
            let reward = t.entries[entry].fitness;
            update_arm(&policy, &mut arms, arm, reward);
            tracing::debug!(run = %rec.record.run_id, call, arm, reward, ?snap, "bandit decision");
            trace.decisions.push(Decision {
                call,
                arm,
                reward,
                snapshot: snap,
            });
        }
    }
    trace.arms = arms;
    rec.record.bandit = Some(trace);
    Ok(rec.finish(true))
}
