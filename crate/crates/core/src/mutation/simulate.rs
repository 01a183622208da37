//! Synthetic mutation operator for offline runs.
//!
//! A candidate lives in one algorithmic *family* with its own fitness
//! ceiling. A child either jumps to a family drawn by discovery
//! probability, or refines within the parent's family: the gap to the
//! ceiling shrinks by `exp(-rate * u)` with `u ~ U(0, 1]`, plus Gaussian
//! noise, clamped to `[0, ceiling]`. Rare high-ceiling families reproduce
//! the anchoring behavior that makes some runs stagnate.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal, OpenClosed01};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Task;

use super::UsageRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub ceiling: f64,
    pub discovery_prob: f64,
    pub improvement_rate: f64,
}

impl Family {
    pub fn new(ceiling: f64, discovery_prob: f64, improvement_rate: f64) -> Self {
        Self {
            ceiling,
            discovery_prob,
            improvement_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyModel {
    pub families: Vec<Family>,
    /// Probability that a child re-draws its family.
    pub switch_prob: f64,
    /// Standard deviation of the additive fitness noise.
    #[serde(default)]
    pub noise: f64,
    /// Probability that a child is invalid and scores 0.
    #[serde(default)]
    pub invalid_prob: f64,
    /// Fitness of the initial program.
    #[serde(default)]
    pub initial_fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FamilyModelError {
    #[error("family model has no families")]
    Empty,
    #[error("{what} = {value} is outside [0, 1]")]
    Probability { what: &'static str, value: f64 },
    #[error("family {index} ceiling {value} is outside [0, 1.05]")]
    Ceiling { index: usize, value: f64 },
    #[error("family {index} improvement rate {value} must be positive")]
    Rate { index: usize, value: f64 },
    #[error("discovery probabilities sum to zero")]
    NoMass,
    #[error("noise {0} must be finite and non-negative")]
    Noise(f64),
}

fn unit(what: &'static str, value: f64) -> Result<(), FamilyModelError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FamilyModelError::Probability { what, value })
    }
}

impl FamilyModel {
    pub fn validate(&self) -> Result<(), FamilyModelError> {
        if self.families.is_empty() {
            return Err(FamilyModelError::Empty);
        }
        unit("switch_prob", self.switch_prob)?;
        unit("invalid_prob", self.invalid_prob)?;
        unit("initial_fitness", self.initial_fitness)?;
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(FamilyModelError::Noise(self.noise));
        }
        for (index, f) in self.families.iter().enumerate() {
            unit("discovery_prob", f.discovery_prob)?;
            if !(0.0..=1.05).contains(&f.ceiling) {
                return Err(FamilyModelError::Ceiling {
                    index,
                    value: f.ceiling,
                });
            }
            if f.improvement_rate.is_nan() || f.improvement_rate <= 0.0 {
                return Err(FamilyModelError::Rate {
                    index,
                    value: f.improvement_rate,
                });
            }
        }
        if self.families.iter().map(|f| f.discovery_prob).sum::<f64>() <= 0.0 {
            return Err(FamilyModelError::NoMass);
        }
        Ok(())
    }

    /// Default models loosely shaped after the per-task behavior of real
    /// runs: a common low-ceiling family and a rare high-ceiling one.
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::CirclePacking => Self {
                families: vec![Family::new(0.89, 0.85, 0.6), Family::new(1.0, 0.15, 1.5)],
                switch_prob: 0.05,
                noise: 0.02,
                invalid_prob: 0.1,
                initial_fitness: 0.36,
            },
            Task::MinMaxDist => Self {
                families: vec![
                    Family::new(0.9603, 0.15, 3.0),
                    Family::new(0.75, 0.6, 0.8),
                    Family::new(0.86, 0.25, 0.5),
                ],
                switch_prob: 0.05,
                noise: 0.02,
                invalid_prob: 0.1,
                initial_fitness: 0.02,
            },
            Task::Heilbronn => Self {
                families: vec![Family::new(0.3, 0.75, 0.8), Family::new(0.95, 0.25, 0.3)],
                switch_prob: 0.05,
                noise: 0.02,
                invalid_prob: 0.5,
                initial_fitness: 0.0,
            },
        }
    }

    /// Draws a family index proportionally to discovery probability.
    pub fn draw_family(&self, rng: &mut impl Rng) -> usize {
        let total: f64 = self.families.iter().map(|f| f.discovery_prob).sum();
        let mut x = rng.random::<f64>() * total;
        for (i, f) in self.families.iter().enumerate() {
            if x < f.discovery_prob {
                return i;
            }
            x -= f.discovery_prob;
        }
        self.families
            .iter()
            .rposition(|f| f.discovery_prob > 0.0)
            .unwrap_or(0)
    }
}

/// Latent state of a simulated candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    /// `None` for the initial program, which belongs to no family.
    pub family: Option<usize>,
    pub fitness: f64,
    #[serde(default)]
    pub invalid: bool,
}

impl SimState {
    pub fn initial(model: &FamilyModel) -> Self {
        Self {
            family: None,
            fitness: model.initial_fitness,
            invalid: false,
        }
    }
}

/// Token-count distributions for synthetic usage records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageModel {
    pub prompt_median: f64,
    pub prompt_sigma: f64,
    pub completion_median: f64,
    pub completion_sigma: f64,
    pub cache_hit_min: f64,
    pub cache_hit_max: f64,
}

impl Default for UsageModel {
    fn default() -> Self {
        Self {
            prompt_median: 3000.0,
            prompt_sigma: 0.3,
            completion_median: 6000.0,
            completion_sigma: 0.5,
            cache_hit_min: 0.94,
            cache_hit_max: 0.98,
        }
    }
}

impl UsageModel {
    pub fn sample(&self, model_id: &str, rng: &mut impl Rng) -> UsageRecord {
        let draw = |median: f64, sigma: f64, rng: &mut dyn rand::RngCore| -> u64 {
            if sigma <= 0.0 {
                return median.round() as u64;
            }
            let d = LogNormal::new(median.ln(), sigma).expect("valid lognormal");
            d.sample(rng).round() as u64
        };
        let prompt = draw(self.prompt_median, self.prompt_sigma, rng);
        let completion = draw(self.completion_median, self.completion_sigma, rng);
        let hit = if self.cache_hit_max > self.cache_hit_min {
            rng.random_range(self.cache_hit_min..self.cache_hit_max)
        } else {
            self.cache_hit_min
        };
        let cached = ((prompt as f64) * hit.clamp(0.0, 1.0)).floor() as u64;
        UsageRecord {
            prompt_tokens: prompt,
            cached_tokens: cached.min(prompt),
            completion_tokens: completion,
            model_id: model_id.to_string(),
        }
    }
}

/// One synthetic mutation of `parent`. Deterministic given `rng`.
pub fn simulate_mutation(parent: &SimState, model: &FamilyModel, rng: &mut impl Rng) -> SimState {
    let switch = parent.family.is_none() || rng.random::<f64>() < model.switch_prob;
    let u: f64 = OpenClosed01.sample(rng);
    let z: f64 = if model.noise > 0.0 {
        Normal::new(0.0, model.noise).expect("valid noise").sample(rng)
    } else {
        0.0
    };
    let invalid = model.invalid_prob > 0.0 && rng.random::<f64>() < model.invalid_prob;

    let (family, start) = if switch {
        (model.draw_family(rng), 0.0)
    } else {
        let f = parent.family.expect("non-switching child has a parent family");
        (f, parent.fitness)
    };
    let fam = &model.families[family];
    let gap = (fam.ceiling - start).max(0.0);
    let decay = (-fam.improvement_rate * u).exp();
    let target = fam.ceiling - gap * decay;
    let fitness = (target + z).clamp(0.0, fam.ceiling);

    if invalid {
        SimState {
            family: Some(family),
            fitness: 0.0,
            invalid: true,
        }
    } else {
        SimState {
            family: Some(family),
            fitness,
            invalid: false,
        }
    }
}
