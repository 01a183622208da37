use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ArmState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Ucb,
    Exp3p,
    Thompson,
    Random,
}

impl std::str::FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['.', '-', '_'], "").as_str() {
            "ucb" | "ucb1" => Ok(Self::Ucb),
            "exp3p" => Ok(Self::Exp3p),
            "thompson" | "ts" => Ok(Self::Thompson),
            "random" => Ok(Self::Random),
            _ => Err(PolicyError::UnknownPolicy(s.to_string())),
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ucb => "ucb",
            Self::Exp3p => "exp3p",
            Self::Thompson => "thompson",
            Self::Random => "random",
        })
    }
}

/// Normal prior over an arm's mean reward.
///
/// Posterior after `n` rewards with sum `s`:
/// mean `(k0*m0 + s) / (k0 + n)`, variance `v0 / (k0 + n)`.
/// `pseudo_counts = 0` is the flat prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThompsonPrior {
    pub mean: f64,
    pub variance: f64,
    pub pseudo_counts: f64,
    /// Only the most recent `window` rewards enter the posterior.
    pub window: Option<usize>,
}

impl Default for ThompsonPrior {
    fn default() -> Self {
        Self {
            mean: 0.0,
            variance: 1.0,
            pseudo_counts: 1.0,
            window: None,
        }
    }
}

impl ThompsonPrior {
    pub fn posterior(&self, rewards: &[f64]) -> (f64, f64) {
        let recent = match self.window {
            Some(w) if rewards.len() > w => &rewards[rewards.len() - w..],
            _ => rewards,
        };
        let n = recent.len() as f64;
        let k = self.pseudo_counts + n;
        if k <= 0.0 {
            return (self.mean, self.variance);
        }
        let mean = (self.pseudo_counts * self.mean + recent.iter().sum::<f64>()) / k;
        (mean, self.variance / k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub policy: PolicyKind,
    pub ucb_c: f64,
    /// `None` selects `min(1, sqrt(K ln K / C))`.
    pub exp3p_gamma: Option<f64>,
    /// `None` selects `gamma / (3K)`.
    pub exp3p_eta: Option<f64>,
    /// `None` selects `sqrt(ln K / (C K))`.
    pub exp3p_beta: Option<f64>,
    pub thompson: ThompsonPrior,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self::of(PolicyKind::Ucb)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("unknown policy {0:?}")]
    UnknownPolicy(String),
    #[error("exp3p_gamma must lie in (0, 1], got {0}")]
    Gamma(f64),
    #[error("{name} must be finite and non-negative, got {value}")]
    NonNegative { name: &'static str, value: f64 },
    #[error("thompson prior variance must be positive, got {0}")]
    Variance(f64),
}

impl PolicyConfig {
    pub fn of(policy: PolicyKind) -> Self {
        Self {
            policy,
            ucb_c: 1.0,
            exp3p_gamma: None,
            exp3p_eta: None,
            exp3p_beta: None,
            thompson: ThompsonPrior::default(),
        }
    }

    /// Fills budget-dependent defaults for `k` arms and `c` total calls.
    pub fn resolve(&self, k: usize, c: u64) -> Result<ResolvedPolicy, PolicyError> {
        let kf = k.max(1) as f64;
        let cf = c.max(1) as f64;
        let gamma = self
            .exp3p_gamma
            .unwrap_or_else(|| (kf * kf.ln() / cf).sqrt().min(1.0));
        // K = 1 makes the default zero; any positive value is equivalent then.
        let gamma = if self.exp3p_gamma.is_none() && gamma <= 0.0 { 1.0 } else { gamma };
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(PolicyError::Gamma(gamma));
        }
        let eta = self.exp3p_eta.unwrap_or(gamma / (3.0 * kf));
        let beta = self.exp3p_beta.unwrap_or_else(|| (kf.ln() / (cf * kf)).sqrt());
        for (name, value) in [("ucb_c", self.ucb_c), ("exp3p_eta", eta), ("exp3p_beta", beta)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(PolicyError::NonNegative { name, value });
            }
        }
        if !(self.thompson.variance > 0.0 && self.thompson.variance.is_finite()) {
            return Err(PolicyError::Variance(self.thompson.variance));
        }
        if !(self.thompson.pseudo_counts >= 0.0) {
            return Err(PolicyError::NonNegative {
                name: "thompson.pseudo_counts",
                value: self.thompson.pseudo_counts,
            });
        }
        Ok(ResolvedPolicy {
            kind: self.policy,
            ucb_c: self.ucb_c,
            gamma,
            eta,
            beta,
            thompson: self.thompson,
        })
    }
}

/// A policy with every constant fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPolicy {
    pub kind: PolicyKind,
    pub ucb_c: f64,
    pub gamma: f64,
    pub eta: f64,
    pub beta: f64,
    pub thompson: ThompsonPrior,
}

impl ResolvedPolicy {
    pub fn ucb_index(&self, arm: &ArmState, t: u64) -> f64 {
        if arm.pulls == 0 {
            return f64::INFINITY;
        }
        arm.mean() + self.ucb_c * (2.0 * (t.max(1) as f64).ln() / arm.pulls as f64).sqrt()
    }

    /// Sampling distribution `(1 - gamma) w_i / sum w + gamma / K`.
    pub fn exp3p_probabilities(&self, arms: &[ArmState]) -> Vec<f64> {
        let k = arms.len() as f64;
        let top = arms
            .iter()
            .map(|a| a.log_weight)
            .fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = arms.iter().map(|a| (a.log_weight - top).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter()
            .map(|wi| (1.0 - self.gamma) * wi / total + self.gamma / k)
            .collect()
    }
}

fn argmax_lowest(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn sample_categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Chooses the arm for call `t` (1-based). Deterministic policies break
/// ties toward the lowest index.
pub fn select_arm<R: Rng + ?Sized>(
    policy: &ResolvedPolicy,
    arms: &[ArmState],
    t: u64,
    rng: &mut R,
) -> usize {
    assert!(!arms.is_empty(), "select_arm needs at least one arm");
    match policy.kind {
        PolicyKind::Ucb => argmax_lowest(arms.iter().map(|a| policy.ucb_index(a, t))),
        PolicyKind::Exp3p => sample_categorical(&policy.exp3p_probabilities(arms), rng),
        PolicyKind::Thompson => argmax_lowest(arms.iter().map(|a| {
            let (m, v) = policy.thompson.posterior(&a.rewards);
            Normal::new(m, v.sqrt()).expect("posterior variance is positive").sample(rng)
        })),
        PolicyKind::Random => rng.random_range(0..arms.len()),
    }
}

/// Records `reward` for arm `i` and updates policy statistics. For EXP3.P
/// the pulled arm gains `eta * (r / p_i)` in log weight and every arm gains
/// the exploration bonus `eta * beta / p_j`, with `p` the distribution the
/// arm was drawn from.
pub fn update_arm(policy: &ResolvedPolicy, arms: &mut [ArmState], i: usize, reward: f64) {
    if policy.kind == PolicyKind::Exp3p {
        let p = policy.exp3p_probabilities(arms);
        let r = reward.clamp(0.0, 1.0);
        for (j, arm) in arms.iter_mut().enumerate() {
            let hit = if j == i { r } else { 0.0 };
            arm.log_weight += policy.eta * (hit + policy.beta) / p[j];
        }
    }
    arms[i].observe(reward);
}
