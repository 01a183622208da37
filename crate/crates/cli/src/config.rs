//! Experiment configuration: a TOML file, overridden by flags and
//! environment variables, validated before any call is issued.

use std::collections::BTreeSet;
use std::path::Path;

use evobudget::accounting::ModelSpec;
use evobudget::analysis::{FitOptions, Response};
use evobudget::base::{ParentSampler, PolicyConfig, PolicyKind};
use evobudget::engine::{BudgetSpec, IslandConfig};
use evobudget::geom::Task;
use evobudget::mutation::{FamilyModel, Framework, SamplingParams, SandboxConfig, UsageModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_ROOT: &str = "EVOBUDGET_ROOT";
pub const ENV_ENDPOINT: &str = "EVOBUDGET_ENDPOINT";
pub const ENV_API_KEY: &str = "EVOBUDGET_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub island: IslandSection,
    #[serde(default)]
    pub base: BaseSection,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Model identifier sent to the endpoint and recorded with every call.
    pub id: String,
    /// Active parameters, for FLOPs accounting.
    pub active_params: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            id: "simulated".into(),
            active_params: 8_000_000_000,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.id.clone(), self.active_params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BackendConfig {
    /// Offline mutation simulator; the default.
    Simulate {
        /// Defaults to the built-in model for the task.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        family_model: Option<FamilyModel>,
        #[serde(default)]
        usage: UsageModel,
    },
    /// An OpenAI-compatible chat-completions endpoint.
    Endpoint {
        /// May be left empty and supplied by flag or environment.
        #[serde(default)]
        base_url: String,
        #[serde(default = "default_framework")]
        framework: Framework,
        #[serde(default)]
        sampling: SamplingParams,
        #[serde(default = "default_timeout")]
        timeout_s: u64,
        #[serde(default = "default_retries")]
        max_retries: u32,
    },
}

fn default_framework() -> Framework {
    Framework::OpenEvolve
}

fn default_timeout() -> u64 {
    600
}

fn default_retries() -> u32 {
    2
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Simulate {
            family_model: None,
            usage: UsageModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    /// Global cap on concurrent LLM requests, shared by all runs.
    pub max_inflight: usize,
    /// Runs executed concurrently.
    pub workers: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            max_inflight: 16,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub budgets: Vec<u64>,
    /// Depths to run at every budget; empty means every power of two
    /// dividing the budget.
    pub depths: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            budgets: vec![64],
            depths: Vec::new(),
        }
    }
}

impl SweepConfig {
    /// The `(C, T)` grid, each depth dividing its budget.
    pub fn grid(&self) -> Vec<BudgetSpec> {
        let mut out = Vec::new();
        for &c in &self.budgets {
            let depths: Vec<u64> = if self.depths.is_empty() {
                std::iter::successors(Some(1u64), |t| t.checked_mul(2))
                    .take_while(|&t| t <= c)
                    .filter(|t| c % t == 0)
                    .collect()
            } else {
                self.depths.iter().copied().filter(|&t| t <= c).collect()
            };
            out.extend(depths.into_iter().map(|t| BudgetSpec { c, t, n: c / t }));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IslandSection {
    pub budget: u64,
    /// Generations; defaults to the budget (one child per generation).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<u64>,
    pub archive: IslandConfig,
}

impl Default for IslandSection {
    fn default() -> Self {
        Self {
            budget: 64,
            depth: None,
            archive: IslandConfig::default(),
        }
    }
}

impl IslandSection {
    pub fn budget_spec(&self) -> BudgetSpec {
        let t = self.depth.unwrap_or(self.budget);
        BudgetSpec {
            c: self.budget,
            t,
            n: if t == 0 { 0 } else { self.budget / t },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    pub budget: u64,
    pub k: usize,
    pub policies: Vec<PolicyKind>,
    pub sampler: ParentSampler,
    pub batch: usize,
    /// Policy hyperparameters; the `policy` field is ignored.
    pub tuning: PolicyConfig,
}

impl Default for BaseSection {
    fn default() -> Self {
        Self {
            budget: 64,
            k: 4,
            policies: vec![
                PolicyKind::Ucb,
                PolicyKind::Exp3p,
                PolicyKind::Thompson,
                PolicyKind::Random,
            ],
            sampler: ParentSampler::Greedy,
            batch: 1,
            tuning: PolicyConfig::default(),
        }
    }
}

impl BaseSection {
    pub fn policy(&self, kind: PolicyKind) -> PolicyConfig {
        PolicyConfig {
            policy: kind,
            ..self.tuning.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Seed of the permutation and bootstrap streams.
    pub analysis_seed: u64,
    pub thresholds: Vec<f64>,
    /// Fraction of resamples that must reach a threshold.
    pub quantile: f64,
    pub resamples: usize,
    pub shuffles: usize,
    pub ceiling: f64,
    pub response: Response,
    /// Log-gap tolerance for the plateau halfwidth.
    pub plateau_delta: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            analysis_seed: 0,
            thresholds: vec![0.9, 0.95, 0.99],
            quantile: 0.9,
            resamples: 1000,
            shuffles: 10_000,
            ceiling: 0.97,
            response: Response::CellMean,
            plateau_delta: 0.05,
        }
    }
}

impl ReportConfig {
    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            ceiling: self.ceiling,
            response: self.response,
            shuffles: self.shuffles,
        }
    }
}

/// Field overrides collected from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub seeds: Option<Vec<u64>>,
    pub model: Option<String>,
    pub active_params: Option<u64>,
    pub endpoint: Option<String>,
    pub budgets: Option<Vec<u64>>,
    pub depths: Option<Vec<u64>>,
    pub budget: Option<u64>,
    pub k: Option<usize>,
    pub policies: Option<Vec<PolicyKind>>,
    pub workers: Option<usize>,
    pub max_inflight: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies flag overrides, then fills an empty endpoint URL from
    /// `endpoint_env`. A `--endpoint` flag switches to the endpoint backend.
    pub fn apply(&mut self, o: &Overrides, endpoint_env: Option<&str>) {
        if let Some(t) = o.task {
            self.task = t;
        }
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(m) = &o.model {
            self.model.id = m.clone();
        }
        if let Some(p) = o.active_params {
            self.model.active_params = p;
        }
        if let Some(url) = &o.endpoint {
            match &mut self.backend {
                BackendConfig::Endpoint { base_url, .. } => *base_url = url.clone(),
                BackendConfig::Simulate { .. } => {
                    self.backend = BackendConfig::Endpoint {
                        base_url: url.clone(),
                        framework: default_framework(),
                        sampling: SamplingParams::default(),
                        timeout_s: default_timeout(),
                        max_retries: default_retries(),
                    }
                }
            }
        }
        if let (BackendConfig::Endpoint { base_url, .. }, Some(env)) = (&mut self.backend, endpoint_env) {
            if base_url.is_empty() {
                *base_url = env.to_string();
            }
        }
        if let Some(b) = &o.budgets {
            self.sweep.budgets = b.clone();
        }
        if let Some(d) = &o.depths {
            self.sweep.depths = d.clone();
        }
        if let Some(c) = o.budget {
            self.island.budget = c;
            self.base.budget = c;
        }
        if let Some(k) = o.k {
            self.base.k = k;
        }
        if let Some(p) = &o.policies {
            self.base.policies = p.clone();
        }
        if let Some(w) = o.workers {
            self.run.workers = w;
        }
        if let Some(m) = o.max_inflight {
            self.run.max_inflight = m;
        }
    }

    /// Checks every invariant that can be checked without running anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds must not be empty"));
        }
        let distinct: BTreeSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(invalid("seeds must be distinct"));
        }
        if self.model.id.is_empty() {
            return Err(invalid("model.id must not be empty"));
        }
        if self.model.active_params == 0 {
            return Err(invalid("model.active_params must be positive"));
        }
        if self.run.workers == 0 || self.run.max_inflight == 0 {
            return Err(invalid("run.workers and run.max_inflight must be at least 1"));
        }
        match &self.backend {
            BackendConfig::Simulate { family_model, .. } => {
                if let Some(m) = family_model {
                    m.validate().map_err(|e| invalid(e.to_string()))?;
                }
            }
            BackendConfig::Endpoint { base_url, .. } => {
                if base_url.is_empty() {
                    return Err(invalid(format!(
                        "endpoint backend needs a base_url (config, --endpoint or {ENV_ENDPOINT})"
                    )));
                }
            }
        }
        if self.sandbox.interpreter.is_empty() {
            return Err(invalid("sandbox.interpreter must not be empty"));
        }
        if !(self.sandbox.limits.wall_time_s > 0.0) {
            return Err(invalid("sandbox.limits.wall_time_s must be positive"));
        }

        if self.sweep.budgets.is_empty() {
            return Err(invalid("sweep.budgets must not be empty"));
        }
        for &c in &self.sweep.budgets {
            for &t in &self.sweep.depths {
                if t == 0 || (t <= c && c % t != 0) {
                    return Err(invalid(format!(
                        "depth T={t} does not divide budget C={c} (need C = T * N)"
                    )));
                }
            }
        }
        for spec in self.sweep.grid() {
            spec.validate().map_err(|e| invalid(e.to_string()))?;
        }
        if self.sweep.grid().is_empty() {
            return Err(invalid("sweep grid is empty: no depth fits any budget"));
        }

        let island = self.island.budget_spec();
        if island.t == 0 || island.c % island.t != 0 {
            return Err(invalid(format!(
                "island depth T={} does not divide budget C={}",
                island.t, island.c
            )));
        }
        island.validate().map_err(|e| invalid(e.to_string()))?;
        self.island
            .archive
            .validate()
            .map_err(|e| invalid(e.to_string()))?;

        let b = &self.base;
        if b.k == 0 || b.k as u64 > b.budget {
            return Err(invalid(format!(
                "BaSE needs 1 <= K <= C, got K={} and C={}",
                b.k, b.budget
            )));
        }
        if b.batch == 0 {
            return Err(invalid("base.batch must be at least 1"));
        }
        if b.policies.is_empty() {
            return Err(invalid("base.policies must not be empty"));
        }
        for &kind in &b.policies {
            b.policy(kind)
                .resolve(b.k, b.budget)
                .map_err(|e| invalid(e.to_string()))?;
        }
        if let ParentSampler::Island(cfg) = &b.sampler {
            cfg.validate().map_err(|e| invalid(e.to_string()))?;
        }

        let r = &self.report;
        if !(r.quantile > 0.0 && r.quantile <= 1.0) {
            return Err(invalid("report.quantile must be in (0, 1]"));
        }
        if r.resamples == 0 {
            return Err(invalid("report.resamples must be at least 1"));
        }
        if !(r.plateau_delta > 0.0) {
            return Err(invalid("report.plateau_delta must be positive"));
        }
        Ok(())
    }

    /// The fully resolved config as a TOML table, for the manifest.
    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("config serializes to a TOML table")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }
}
