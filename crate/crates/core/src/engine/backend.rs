//! Text generation backends.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use ureq::Agent;

use crate::http::{self, HttpFailure};

pub const LLM_URL_ENV: &str = "HIPPO_LLM_URL";
pub const LLM_KEY_ENV: &str = "HIPPO_LLM_KEY";
pub const LLM_MODEL_ENV: &str = "HIPPO_LLM_MODEL";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub temperature: f64,
    /// Zero-based index of this call within the current solve.
    pub call_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    /// Per generated token, the top-k log-probabilities (natural log).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub top_logprobs: Vec<Vec<f64>>,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            top_logprobs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("generation request failed (status {status:?}): {message}")]
    Transport { status: Option<u16>, message: String },
    #[error("scenario has no response for call {call} at temperature {temperature}")]
    NoScenarioEntry { call: usize, temperature: f64 },
    #[error("malformed backend response: {0}")]
    Format(String),
    #[error("scenario file: {0}")]
    Scenario(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { status, .. } => match status {
                None => true,
                Some(s) => *s == 429 || *s >= 500,
            },
            _ => false,
        }
    }
}

impl From<HttpFailure> for BackendError {
    fn from(f: HttpFailure) -> Self {
        BackendError::Transport {
            status: f.status,
            message: f.message,
        }
    }
}

/// A language model. Implementations must tolerate concurrent calls.
pub trait GenerationBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Generation, BackendError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for &B {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        (**self).generate(request)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        (**self).generate(request)
    }
}

/// One scenario rule. Missing fields match anything; bands are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    #[serde(default)]
    pub call: Option<usize>,
    #[serde(default)]
    pub temperature_min: Option<f64>,
    #[serde(default)]
    pub temperature_max: Option<f64>,
    #[serde(default)]
    pub prompt_contains: Option<String>,
    pub response: String,
    #[serde(default)]
    pub top_logprobs: Vec<Vec<f64>>,
}

impl ScenarioEntry {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            call: None,
            temperature_min: None,
            temperature_max: None,
            prompt_contains: None,
            response: response.into(),
            top_logprobs: Vec::new(),
        }
    }

    pub fn at_call(mut self, call: usize) -> Self {
        self.call = Some(call);
        self
    }

    pub fn temperature_band(mut self, min: f64, max: f64) -> Self {
        self.temperature_min = Some(min);
        self.temperature_max = Some(max);
        self
    }

    pub fn when_prompt_contains(mut self, needle: impl Into<String>) -> Self {
        self.prompt_contains = Some(needle.into());
        self
    }

    fn matches(&self, req: &GenerationRequest<'_>) -> bool {
        self.call.is_none_or(|c| c == req.call_index)
            && self.temperature_min.is_none_or(|t| req.temperature >= t)
            && self.temperature_max.is_none_or(|t| req.temperature <= t)
            && self
                .prompt_contains
                .as_deref()
                .is_none_or(|n| req.prompt.contains(n))
    }
}

/// Replays a scenario: the first entry matching the request wins.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScriptedBackend {
    entries: Vec<ScenarioEntry>,
}

impl ScriptedBackend {
    pub fn new(entries: Vec<ScenarioEntry>) -> Self {
        Self { entries }
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        let entries = serde_json::from_str(text).map_err(|e| BackendError::Scenario(e.to_string()))?;
        Ok(Self { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::Scenario(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[ScenarioEntry] {
        &self.entries
    }
}

impl GenerationBackend for ScriptedBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        self.entries
            .iter()
            .find(|e| e.matches(request))
            .map(|e| Generation {
                text: e.response.clone(),
                top_logprobs: e.top_logprobs.clone(),
            })
            .ok_or(BackendError::NoScenarioEntry {
                call: request.call_index,
                temperature: request.temperature,
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatBackendConfig {
    /// Base URL; requests go to `{url}/v1/chat/completions`.
    pub url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub top_logprobs: usize,
    pub timeout: Duration,
}

impl ChatBackendConfig {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            api_key: None,
            model: model.into(),
            top_logprobs: 5,
            timeout: Duration::from_secs(120),
        }
    }

    /// Reads `HIPPO_LLM_URL`, `HIPPO_LLM_MODEL` and the optional `HIPPO_LLM_KEY`.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(LLM_URL_ENV).ok()?;
        let model = std::env::var(LLM_MODEL_ENV).unwrap_or_else(|_| "default".to_owned());
        let mut cfg = Self::new(url, model);
        cfg.api_key = std::env::var(LLM_KEY_ENV).ok();
        Some(cfg)
    }
}

/// Client for an OpenAI-compatible chat completions endpoint.
pub struct ChatBackend {
    config: ChatBackendConfig,
    agent: Agent,
}

impl ChatBackend {
    pub fn new(config: ChatBackendConfig) -> Self {
        let agent = http::agent(config.timeout);
        Self { config, agent }
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/chat/completions", self.config.url.trim_end_matches('/'))
    }
}

impl GenerationBackend for ChatBackend {
    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Generation, BackendError> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "logprobs": self.config.top_logprobs > 0,
            "top_logprobs": self.config.top_logprobs,
        });
        let resp: Value = http::post_json(&self.agent, &self.endpoint(), self.config.api_key.as_deref(), &body)?;
        parse_chat_response(&resp)
    }
}

fn parse_chat_response(resp: &Value) -> Result<Generation, BackendError> {
    let choice = resp
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Format("missing choices[0]".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Format("missing message.content".into()))?
        .to_owned();
    let top_logprobs = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .map(|tokens| {
            tokens
                .iter()
                .map(|t| {
                    t.get("top_logprobs")
                        .and_then(Value::as_array)
                        .map(|alts| alts.iter().filter_map(|a| a.get("logprob")?.as_f64()).collect())
                        .unwrap_or_default()
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(Generation { text, top_logprobs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_matching_order() {
        let b = ScriptedBackend::new(vec![
            ScenarioEntry::new("hot").temperature_band(1.2, 2.0),
            ScenarioEntry::new("hinted").when_prompt_contains("HINT"),
            ScenarioEntry::new("second").at_call(1),
            ScenarioEntry::new("default"),
        ]);
        let req = |prompt, temperature, call_index| GenerationRequest {
            prompt,
            temperature,
            call_index,
        };
        assert_eq!(b.generate(&req("q", 0.7, 0)).unwrap().text, "default");
        assert_eq!(b.generate(&req("q", 0.7, 1)).unwrap().text, "second");
        assert_eq!(b.generate(&req("q HINT", 0.7, 1)).unwrap().text, "hinted");
        assert_eq!(b.generate(&req("q HINT", 1.5, 1)).unwrap().text, "hot");
        assert_eq!(b.generate(&req("q", 1.2, 3)).unwrap().text, "hot");
        let empty = ScriptedBackend::default();
        assert!(matches!(
            empty.generate(&req("q", 0.7, 0)),
            Err(BackendError::NoScenarioEntry { call: 0, .. })
        ));
    }

    #[test]
    fn scenario_file_format() {
        let b = ScriptedBackend::from_json(
            r#"[{"call": 0, "temperature_min": 0.0, "temperature_max": 1.0, "response": "one"},
                {"response": "two", "top_logprobs": [[-0.1, -2.5]]}]"#,
        )
        .unwrap();
        assert_eq!(b.entries().len(), 2);
        let g = b
            .generate(&GenerationRequest {
                prompt: "",
                temperature: 1.5,
                call_index: 0,
            })
            .unwrap();
        assert_eq!(g.text, "two");
        assert_eq!(g.top_logprobs, vec![vec![-0.1, -2.5]]);
        assert!(matches!(ScriptedBackend::from_json("{"), Err(BackendError::Scenario(_))));
    }

    #[test]
    fn chat_response_parsing() {
        let resp = json!({
            "choices": [{
                "message": {"role": "assistant", "content": "x = 2\n\n#### 2"},
                "logprobs": {"content": [
                    {"token": "x", "logprob": -0.1, "top_logprobs": [{"token": "x", "logprob": -0.1}, {"token": "y", "logprob": -2.4}]},
                    {"token": " =", "logprob": -0.01, "top_logprobs": []}
                ]}
            }]
        });
        let g = parse_chat_response(&resp).unwrap();
        assert_eq!(g.text, "x = 2\n\n#### 2");
        assert_eq!(g.top_logprobs, vec![vec![-0.1, -2.4], vec![]]);
        let bare = json!({"choices": [{"message": {"content": "hi"}}]});
        assert!(parse_chat_response(&bare).unwrap().top_logprobs.is_empty());
        assert!(matches!(parse_chat_response(&json!({})), Err(BackendError::Format(_))));
    }

    #[test]
    fn retryable_statuses() {
        let t = |status| BackendError::Transport {
            status,
            message: String::new(),
        };
        assert!(t(None).is_retryable());
        assert!(t(Some(503)).is_retryable());
        assert!(t(Some(429)).is_retryable());
        assert!(!t(Some(400)).is_retryable());
        assert!(!BackendError::Format(String::new()).is_retryable());
    }
}
