//! Chat-completion client contract plus the two shipped backends: an
//! OpenAI-compatible HTTP client and deterministic mocks for offline runs.

use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub system_text: String,
    pub user_text: String,
    pub max_new_tokens: u32,
    pub model_id: String,
}

#[derive(Debug, Error)]
pub enum ClientError {
    /// Retryable transport-level failure.
    #[error("transport error: {0}")]
    Transport(String),
    /// Fatal configuration problem (missing endpoint, credentials, fixture).
    #[error("config error: {0}")]
    Config(String),
}

/// A chat-completion backend. `tag` identifies the unit of work (passage or
/// document id) so deterministic mocks can key canned responses; network
/// backends ignore it. Implementations must be safe to call from multiple
/// worker threads at once.
pub trait ChatClient: Sync {
    fn submit(&self, request: &PromptRequest, tag: &str) -> Result<String, ClientError>;
}

/// Retry schedule for transient transport failures: `attempts` tries total,
/// exponential backoff starting at `base_delay`.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Submit with retries. Returns the response text and the number of attempts
/// used. Config errors are never retried.
pub fn submit_with_retry(
    client: &dyn ChatClient,
    request: &PromptRequest,
    tag: &str,
    policy: RetryPolicy,
) -> (Result<String, ClientError>, u32) {
    let mut delay = policy.base_delay;
    for attempt in 1..=policy.attempts {
        match client.submit(request, tag) {
            Ok(text) => return (Ok(text), attempt),
            Err(ClientError::Config(msg)) => return (Err(ClientError::Config(msg)), attempt),
            Err(ClientError::Transport(msg)) => {
                if attempt == policy.attempts {
                    return (Err(ClientError::Transport(msg)), attempt);
                }
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
    }
    unreachable!("attempts >= 1")
}

/// Client speaking the OpenAI-compatible `/chat/completions` wire protocol.
pub struct OpenAiClient {
    endpoint: String,
    api_key: Option<String>,
    temperature: Option<f64>,
    http: reqwest::blocking::Client,
}

impl OpenAiClient {
    /// `credential_env` names the environment variable holding the API key;
    /// `None` sends no Authorization header (local servers).
    pub fn new(
        endpoint: &str,
        credential_env: Option<&str>,
        temperature: Option<f64>,
    ) -> Result<Self, ClientError> {
        if endpoint.is_empty() {
            return Err(ClientError::Config("endpoint URL is empty".into()));
        }
        let api_key = match credential_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                ClientError::Config(format!("credential env var {var} is not set"))
            })?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(OpenAiClient {
            endpoint: endpoint.to_string(),
            api_key,
            temperature,
            http,
        })
    }
}

impl ChatClient for OpenAiClient {
    fn submit(&self, request: &PromptRequest, _tag: &str) -> Result<String, ClientError> {
        let mut body = json!({
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "max_tokens": request.max_new_tokens,
        });
        if let Some(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        let mut req = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            return Err(ClientError::Transport(format!("HTTP {status}: {text}")));
        }
        let parsed: serde_json::Value = resp
            .json()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(|s| s.to_string())
            .ok_or_else(|| ClientError::Transport("malformed completion response".into()))
    }
}

/// Deterministic mock keyed by tag: every submission for a tag returns the
/// same canned response.
pub struct MockChatClient {
    responses: BTreeMap<String, String>,
}

impl MockChatClient {
    pub fn new(responses: BTreeMap<String, String>) -> Self {
        MockChatClient { responses }
    }
}

impl ChatClient for MockChatClient {
    fn submit(&self, _request: &PromptRequest, tag: &str) -> Result<String, ClientError> {
        self.responses
            .get(tag)
            .cloned()
            .ok_or_else(|| ClientError::Transport(format!("no mock fixture for tag {tag}")))
    }
}

/// Mock that replays a recorded transcript in order, independent of tags.
/// Intended for strictly sequential callers like topic generation.
pub struct ScriptedClient {
    responses: Mutex<std::collections::VecDeque<String>>,
}

impl ScriptedClient {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedClient {
            responses: Mutex::new(responses.into()),
        }
    }
}

impl ChatClient for ScriptedClient {
    fn submit(&self, _request: &PromptRequest, _tag: &str) -> Result<String, ClientError> {
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .ok_or_else(|| ClientError::Transport("transcript exhausted".into()))
    }
}
