//! Blocking client for OpenAI-compatible `/chat/completions` endpoints.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::prompt::Prompt;
use super::UsageRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: Option<u32>,
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            top_p: 0.95,
            max_tokens: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub base_url: String,
    pub model_id: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
    /// Extra attempts after the first one.
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_timeout_s() -> u64 {
    600
}

fn default_retries() -> u32 {
    2
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_id: model_id.into(),
            api_key: None,
            timeout_s: default_timeout_s(),
            max_retries: default_retries(),
        }
    }

    fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

/// Model text plus one usage record per issued attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationResponse {
    pub text: String,
    pub attempts: Vec<UsageRecord>,
}

impl MutationResponse {
    /// Usage of the successful (final) attempt.
    pub fn usage(&self) -> &UsageRecord {
        self.attempts.last().expect("at least one attempt")
    }

    pub fn attempt_count(&self) -> usize {
        self.attempts.len()
    }
}

/// Every attempt failed; the attempts are still charged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("generation failed after {} attempt(s): {message}", attempts.len())]
pub struct CallFailure {
    pub attempts: Vec<UsageRecord>,
    pub message: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
    #[serde(default)]
    prompt_tokens_details: Option<PromptDetails>,
}

#[derive(Deserialize)]
struct PromptDetails {
    #[serde(default)]
    cached_tokens: Option<u64>,
}

enum Attempt {
    Done(String, UsageRecord),
    Retry(String, UsageRecord),
    Fatal(String, UsageRecord),
}

pub struct ChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn usage_from(&self, usage: Option<WireUsage>) -> UsageRecord {
        let Some(u) = usage else {
            return UsageRecord::empty(&self.config.model_id);
        };
        let cached = u
            .prompt_tokens_details
            .and_then(|d| d.cached_tokens)
            .unwrap_or(0)
            .min(u.prompt_tokens);
        UsageRecord {
            prompt_tokens: u.prompt_tokens,
            cached_tokens: cached,
            completion_tokens: u.completion_tokens,
            model_id: self.config.model_id.clone(),
        }
    }

    fn attempt(&self, body: &serde_json::Value) -> Attempt {
        let empty = || UsageRecord::empty(&self.config.model_id);
        let mut request = self.agent.post(&self.config.url());
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match request.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport: {e}"), empty()),
        };
        let status = response.status().as_u16();
        let text = match response.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}"), empty()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"), empty());
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(format!("HTTP {status}: {}", truncate(&text, 200)), empty());
        }
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => {
                let usage = self.usage_from(parsed.usage);
                match parsed.choices.into_iter().next().and_then(|c| c.message.content) {
                    Some(content) => Attempt::Done(content, usage),
                    None => Attempt::Retry("response has no message content".into(), usage),
                }
            }
            Err(e) => Attempt::Retry(format!("malformed body: {e}"), empty()),
        }
    }

    /// Issues the request, retrying transient failures up to `max_retries`
    /// times. Every attempt yields one usage record.
    pub fn generate(
        &self,
        prompt: &Prompt,
        params: &SamplingParams,
    ) -> Result<MutationResponse, CallFailure> {
        let mut body = json!({
            "model": self.config.model_id,
            "messages": [
                {"role": "system", "content": prompt.system},
                {"role": "user", "content": prompt.user},
            ],
            "temperature": params.temperature,
            "top_p": params.top_p,
        });
        if let Some(max) = params.max_tokens {
            body["max_tokens"] = json!(max);
        }
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed);
        }

        let mut attempts = Vec::new();
        let mut message = String::new();
        for _ in 0..=self.config.max_retries {
            match self.attempt(&body) {
                Attempt::Done(text, usage) => {
                    attempts.push(usage);
                    return Ok(MutationResponse { text, attempts });
                }
                Attempt::Retry(msg, usage) => {
                    tracing::warn!(error = %msg, "generation attempt failed, retrying");
                    attempts.push(usage);
                    message = msg;
                }
                Attempt::Fatal(msg, usage) => {
                    attempts.push(usage);
                    message = msg;
                    break;
                }
            }
        }
        Err(CallFailure { attempts, message })
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
