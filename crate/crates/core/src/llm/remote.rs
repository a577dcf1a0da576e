//! Chat-completions client over blocking HTTP.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{Backend, BackendError, ChatRequest, LlmError};

/// Environment variable holding the bearer credential.
pub const API_KEY_ENV: &str = "NW_LLM_API_KEY";

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug)]
pub struct ChatCompletionsBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl ChatCompletionsBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(ChatCompletionsBackend { endpoint: endpoint.into(), model: model.into(), api_key, client })
    }

    /// Reads the credential from [`API_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, LlmError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(endpoint, model, key, timeout)
    }

    fn scrub(&self, text: &str) -> String {
        match &self.api_key {
            Some(k) => text.replace(k.as_str(), "[credential]"),
            None => text.to_string(),
        }
    }
}

impl Backend for ChatCompletionsBackend {
    fn id(&self) -> String {
        format!("chat-completions:{}", self.model)
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
        });
        let mut call = self.client.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| BackendError::Transport(self.scrub(&e.to_string())))?;
        let status = response.status();
        let text = response.text().map_err(|e| BackendError::Transport(self.scrub(&e.to_string())))?;
        let snippet: String = self.scrub(&text).chars().take(500).collect();
        if status.as_u16() == 429 {
            return Err(BackendError::RateLimited(snippet));
        }
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("HTTP {status}: {snippet}")));
        }
        if !status.is_success() {
            return Err(BackendError::Fatal(format!("HTTP {status}: {snippet}")));
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("unexpected response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Fatal("response carried no message content".into()))
    }
}
