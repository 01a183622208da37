use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token counts for one issued generation attempt.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UsageRecord {
    pub prompt_tokens: u64,
    pub cached_tokens: u64,
    pub completion_tokens: u64,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cached tokens ({cached}) exceed prompt tokens ({prompt})")]
pub struct UsageError {
    pub prompt: u64,
    pub cached: u64,
}

impl UsageRecord {
    pub fn new(
        prompt_tokens: u64,
        cached_tokens: u64,
        completion_tokens: u64,
        model_id: impl Into<String>,
    ) -> Result<Self, UsageError> {
        let record = Self {
            prompt_tokens,
            cached_tokens,
            completion_tokens,
            model_id: model_id.into(),
        };
        record.validate()?;
        Ok(record)
    }

    /// An attempt that never produced a usage report (transport failure).
    pub fn empty(model_id: impl Into<String>) -> Self {
        Self {
            prompt_tokens: 0,
            cached_tokens: 0,
            completion_tokens: 0,
            model_id: model_id.into(),
        }
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.cached_tokens > self.prompt_tokens {
            return Err(UsageError {
                prompt: self.prompt_tokens,
                cached: self.cached_tokens,
            });
        }
        Ok(())
    }

    pub fn uncached_tokens(&self) -> u64 {
        self.prompt_tokens.saturating_sub(self.cached_tokens)
    }
}
