#![allow(dead_code)]

pub mod analysis;
pub mod geom;

use evobudget::geom::Task;
use evobudget::mutation::{
    Backend, BackendError, Payload, Proposal, ProposalRequest, SimState, UsageRecord,
};

pub type ProposeFn = dyn Fn(&ProposalRequest<'_>) -> Result<Proposal, BackendError> + Send + Sync;

/// Backend whose children come from a closure.
pub struct FnBackend {
    pub initial_fitness: f64,
    pub parallel: bool,
    pub propose: Box<ProposeFn>,
}

impl FnBackend {
    pub fn new(
        initial_fitness: f64,
        f: impl Fn(&ProposalRequest<'_>) -> Result<Proposal, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            initial_fitness,
            parallel: false,
            propose: Box::new(f),
        }
    }

    /// Child fitness is a function of the call index alone.
    pub fn by_call(initial_fitness: f64, f: impl Fn(u64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(initial_fitness, move |req| Ok(child(None, f(req.call_index))))
    }
}

pub fn usage() -> UsageRecord {
    UsageRecord::new(100, 40, 50, "stub").unwrap()
}

pub fn child(family: Option<usize>, fitness: f64) -> Proposal {
    Proposal {
        payload: Some(Payload::Simulated(SimState {
            family,
            fitness,
            invalid: false,
        })),
        fitness,
        attempts: vec![usage()],
        failure: None,
        response_text: None,
        output: None,
    }
}

pub fn parent_state(req: &ProposalRequest<'_>) -> SimState {
    match req.parent {
        Payload::Simulated(s) => *s,
        Payload::Program { .. } => panic!("stub expects simulated payloads"),
    }
}

impl Backend for FnBackend {
    fn model_id(&self) -> &str {
        "stub"
    }

    fn parallel(&self) -> bool {
        self.parallel
    }

    fn initial(&self, _task: Task) -> Result<(Payload, f64), BackendError> {
        Ok((
            Payload::Simulated(SimState {
                family: None,
                fitness: self.initial_fitness,
                invalid: false,
            }),
            self.initial_fitness,
        ))
    }

    fn propose(&self, req: &ProposalRequest<'_>) -> Result<Proposal, BackendError> {
        (self.propose)(req)
    }
}

/// Zeroes wall-clock fields so records from separate runs compare equal.
pub fn strip_timing(mut r: evobudget::engine::RunRecord) -> evobudget::engine::RunRecord {
    r.started_unix_ms = 0;
    r.wall_ms = 0;
    r
}
