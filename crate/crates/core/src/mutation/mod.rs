//! Child generation: one [`Backend`] interface over the real pipeline
//! (prompt, endpoint, extraction, sandbox, evaluator) and the simulated
//! family-based operator.

pub mod client;
pub mod extract;
pub mod prompt;
pub mod sandbox;
pub mod simulate;
mod usage;

use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, EvalOptions, Task, Violation};
use crate::rng::{self, Purpose};

pub use client::{CallFailure, ChatClient, EndpointConfig, MutationResponse, SamplingParams};
pub use extract::{extract_program, CandidateProgram, ExtractionFailure};
pub use prompt::{build_prompt, Framework, HistoryEntry, Prompt, PromptContext, TemplateSet};
pub use sandbox::{ExecFailureKind, ExecOutput, Sandbox, SandboxConfig, SandboxLimits};
pub use simulate::{simulate_mutation, Family, FamilyModel, SimState, UsageModel};
pub use usage::{UsageError, UsageRecord};

/// What a candidate is: program text or a simulated latent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Program { source: String },
    Simulated(SimState),
}

impl Payload {
    /// Secondary archive feature: program length, or family index when
    /// simulated.
    pub fn size_feature(&self) -> usize {
        match self {
            Payload::Program { source } => source.len(),
            Payload::Simulated(s) => s.family.map_or(0, |f| f + 1),
        }
    }

    /// Text shown for this candidate in prompt history.
    pub fn summary(&self) -> String {
        match self {
            Payload::Program { source } => source.clone(),
            Payload::Simulated(s) => match s.family {
                Some(f) => format!("# simulated family {f}, fitness {:.4}", s.fitness),
                None => "# initial program".to_string(),
            },
        }
    }
}

/// Why a child scored 0 without a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Failure {
    Call { message: String },
    Extraction { reason: ExtractionFailure },
    Execution { kind: ExecFailureKind },
    Input { message: String },
    Invalid { violations: Vec<Violation> },
}

/// One parent-to-child request.
#[derive(Debug, Clone)]
pub struct ProposalRequest<'a> {
    pub task: Task,
    pub parent: &'a Payload,
    pub parent_fitness: f64,
    /// Scored candidates of the trajectory so far; empty for the bare task prompt.
    pub history: &'a [HistoryEntry],
    /// 1-based index of this call within the run.
    pub call_index: u64,
    pub seed: u64,
}

/// A scored child plus every usage record its generation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    /// `None` when no program could be obtained from the model.
    pub payload: Option<Payload>,
    pub fitness: f64,
    pub attempts: Vec<UsageRecord>,
    pub failure: Option<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<ExecOutput>,
}

/// Failures that make further calls pointless; a run aborts on these.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error(transparent)]
    Sandbox(#[from] sandbox::SandboxError),
    #[error(transparent)]
    Template(#[from] prompt::TemplateError),
    #[error("backend cannot mutate a {0} payload")]
    PayloadMismatch(&'static str),
    #[error("invalid family model: {0}")]
    FamilyModel(#[from] simulate::FamilyModelError),
}

/// Produces scored children. Implementations must be deterministic in
/// `(request, seed)` when they are used for replayable runs.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;

    /// The task's initial program and its fitness. Not a budgeted call.
    fn initial(&self, task: Task) -> Result<(Payload, f64), BackendError>;

    fn propose(&self, request: &ProposalRequest<'_>) -> Result<Proposal, BackendError>;

    /// Whether sibling children benefit from running on separate threads.
    fn parallel(&self) -> bool {
        true
    }
}

/// Offline backend driven by a [`FamilyModel`].
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    pub model: FamilyModel,
    pub usage: UsageModel,
    pub model_id: String,
}

impl SimulatedBackend {
    pub fn new(model: FamilyModel) -> Result<Self, BackendError> {
        model.validate()?;
        Ok(Self {
            model,
            usage: UsageModel::default(),
            model_id: "simulated".into(),
        })
    }

    pub fn for_task(task: Task) -> Self {
        Self::new(FamilyModel::for_task(task)).expect("builtin models are valid")
    }
}

impl Backend for SimulatedBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn parallel(&self) -> bool {
        false
    }

    fn initial(&self, _task: Task) -> Result<(Payload, f64), BackendError> {
        let state = SimState::initial(&self.model);
        Ok((Payload::Simulated(state), state.fitness))
    }

    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Proposal, BackendError> {
        let Payload::Simulated(parent) = req.parent else {
            return Err(BackendError::PayloadMismatch("program"));
        };
        let mut rng = rng::stream(req.seed, Purpose::Mutation, req.call_index);
        let child = simulate_mutation(parent, &self.model, &mut rng);
        let usage = self.usage.sample(&self.model_id, &mut rng);
        let failure = child.invalid.then(|| Failure::Invalid {
            violations: vec![Violation::WrongShape {
                expected: "valid configuration".into(),
            }],
        });
        Ok(Proposal {
            payload: Some(Payload::Simulated(child)),
            fitness: child.fitness,
            attempts: vec![usage],
            failure,
            response_text: None,
            output: None,
        })
    }
}

/// Caps concurrent requests across every run sharing it.
#[derive(Debug)]
pub struct InflightLimiter {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InflightLimiter {
    pub fn new(cap: usize) -> Arc<Self> {
        Arc::new(Self {
            cap: cap.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        })
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    fn acquire(&self) -> InflightGuard<'_> {
        let mut used = self.used.lock().expect("limiter poisoned");
        while *used >= self.cap {
            used = self.freed.wait(used).expect("limiter poisoned");
        }
        *used += 1;
        InflightGuard { limiter: self }
    }
}

struct InflightGuard<'a> {
    limiter: &'a InflightLimiter,
}

impl Drop for InflightGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.limiter.used.lock().expect("limiter poisoned");
        *used -= 1;
        self.limiter.freed.notify_one();
    }
}

macro_rules! initial_asset {
    ($name:literal) => {
        include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/assets/initial/", $name))
    };
}

/// The shipped initial program for `task`.
pub fn initial_program(task: Task) -> &'static str {
    match task {
        Task::CirclePacking => initial_asset!("cp.py"),
        Task::MinMaxDist => initial_asset!("mmd.py"),
        Task::Heilbronn => initial_asset!("ht.py"),
    }
}

/// Real mode: prompt an endpoint, extract the program, run it, score it.
pub struct LlmBackend {
    pub client: ChatClient,
    pub templates: TemplateSet,
    pub framework: Framework,
    pub sampling: SamplingParams,
    pub sandbox: Sandbox,
    pub eval: EvalOptions,
    pub limiter: Arc<InflightLimiter>,
    pub initial_programs: HashMap<Task, String>,
}

impl LlmBackend {
    pub fn new(client: ChatClient, sandbox: Sandbox, limiter: Arc<InflightLimiter>) -> Self {
        Self {
            client,
            templates: TemplateSet::builtin(),
            framework: Framework::OpenEvolve,
            sampling: SamplingParams::default(),
            sandbox,
            eval: EvalOptions::default(),
            limiter,
            initial_programs: HashMap::new(),
        }
    }

    fn score_program(
        &self,
        task: Task,
        program: &CandidateProgram,
        label: &str,
    ) -> Result<(f64, Option<Failure>, ExecOutput), BackendError> {
        match self.sandbox.execute_candidate(program, task, label)? {
            Err(fail) => Ok((
                0.0,
                Some(Failure::Execution { kind: fail.kind }),
                fail.output,
            )),
            Ok(ok) => match geom::evaluate(task, &ok.configuration, &self.eval) {
                Err(e) => Ok((
                    0.0,
                    Some(Failure::Input {
                        message: e.to_string(),
                    }),
                    ok.output,
                )),
                Ok(score) if !score.is_valid() => Ok((
                    0.0,
                    Some(Failure::Invalid {
                        violations: score.violations,
                    }),
                    ok.output,
                )),
                Ok(score) => Ok((score.value, None, ok.output)),
            },
        }
    }
}

impl Backend for LlmBackend {
    fn model_id(&self) -> &str {
        &self.client.config().model_id
    }

    fn initial(&self, task: Task) -> Result<(Payload, f64), BackendError> {
        let source = self
            .initial_programs
            .get(&task)
            .cloned()
            .unwrap_or_else(|| initial_program(task).to_string());
        let program = CandidateProgram {
            source: source.clone(),
            language: Some("python".into()),
        };
        let (fitness, failure, _) = self.score_program(task, &program, "initial")?;
        if let Some(f) = failure {
            tracing::warn!(?f, "initial program does not produce a valid configuration");
        }
        Ok((Payload::Program { source }, fitness))
    }

    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Proposal, BackendError> {
        let Payload::Program { source } = req.parent else {
            return Err(BackendError::PayloadMismatch("simulated"));
        };
        let mut ctx = PromptContext::new(req.task, source.clone(), req.parent_fitness);
        ctx.framework = self.framework;
        ctx.history = req.history.to_vec();
        ctx.timeout_s = self.sandbox.config().limits.wall_time_s.ceil() as u64;
        let prompt = build_prompt(&ctx, &self.templates)?;
        let mut params = self.sampling.clone();
        params.seed = Some(rng::call_seed(req.seed, req.call_index));

        let generated = {
            let _slot = self.limiter.acquire();
            self.client.generate(&prompt, &params)
        };
        let response = match generated {
            Ok(r) => r,
            Err(fail) => {
                return Ok(Proposal {
                    payload: None,
                    fitness: 0.0,
                    attempts: fail.attempts,
                    failure: Some(Failure::Call {
                        message: fail.message,
                    }),
                    response_text: None,
                    output: None,
                })
            }
        };
        let program = match extract_program(&response.text) {
            Ok(p) => p,
            Err(reason) => {
                return Ok(Proposal {
                    payload: None,
                    fitness: 0.0,
                    attempts: response.attempts,
                    failure: Some(Failure::Extraction { reason }),
                    response_text: Some(response.text),
                    output: None,
                })
            }
        };
        let label = format!("call-{:06}", req.call_index);
        let (fitness, failure, output) = self.score_program(req.task, &program, &label)?;
        Ok(Proposal {
            payload: Some(Payload::Program {
                source: program.source,
            }),
            fitness,
            attempts: response.attempts,
            failure,
            response_text: Some(response.text),
            output: Some(output),
        })
    }
}
