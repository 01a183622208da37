//! Effective-FLOPs ledger.
//!
//! Every issued attempt (retries included) is charged
//! `2 * P_active * (prompt - cached + completion)`. Values are kept as
//! `u128`, which is exact for any realistic run: 512 calls at 1e13 FLOPs
//! each is about 5e15, far below the 3.4e38 ceiling.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::mutation::{UsageError, UsageRecord};

/// A dense model; `active_params` is its total parameter count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub active_params: u64,
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>, active_params: u64) -> Self {
        assert!(active_params > 0, "active parameter count must be positive");
        Self {
            model_id: model_id.into(),
            active_params,
        }
    }
}

pub fn flops_for_call(usage: &UsageRecord, model: &ModelSpec) -> Result<u128, UsageError> {
    usage.validate()?;
    let tokens = u128::from(usage.uncached_tokens()) + u128::from(usage.completion_tokens);
    Ok(2 * u128::from(model.active_params) * tokens)
}

/// FLOPs the same call would be charged if cached prompt tokens were not
/// subtracted.
pub fn flops_ignoring_cache(usage: &UsageRecord, model: &ModelSpec) -> u128 {
    let tokens = u128::from(usage.prompt_tokens) + u128::from(usage.completion_tokens);
    2 * u128::from(model.active_params) * tokens
}

/// Per-attempt FLOPs with their prefix sums.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopsLedger {
    pub per_call: Vec<u128>,
    pub cumulative: Vec<u128>,
}

impl FlopsLedger {
    pub fn total(&self) -> u128 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.per_call.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_call.is_empty()
    }

    pub fn push(&mut self, flops: u128) {
        let total = self.total() + flops;
        self.per_call.push(flops);
        self.cumulative.push(total);
    }

    /// Totals grouped by an external key per entry (e.g. generation index).
    pub fn totals_by<K: Ord>(&self, keys: impl IntoIterator<Item = K>) -> BTreeMap<K, u128> {
        let mut out = BTreeMap::new();
        for (key, flops) in keys.into_iter().zip(&self.per_call) {
            *out.entry(key).or_insert(0) += flops;
        }
        out
    }

    /// `call,flops,cumulative_flops` rows, call index starting at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("call,flops,cumulative_flops\n");
        for (i, (f, c)) in self.per_call.iter().zip(&self.cumulative).enumerate() {
            let _ = writeln!(out, "{},{},{}", i + 1, f, c);
        }
        out
    }
}

/// Ledger over attempt-level records in call order.
pub fn cumulative_flops<'a>(
    records: impl IntoIterator<Item = &'a UsageRecord>,
    model: &ModelSpec,
) -> Result<FlopsLedger, UsageError> {
    let mut ledger = FlopsLedger::default();
    for usage in records {
        ledger.push(flops_for_call(usage, model)?);
    }
    Ok(ledger)
}
