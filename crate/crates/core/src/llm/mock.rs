//! Deterministic backend driven by an ordered pattern -> response playbook.

use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ChatRequest, LlmError, Role};

/// Reply for prompts no rule matches: prose with no code block.
pub const DEFAULT_MOCK_RESPONSE: &str = "No scripted response matches this prompt.";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuleDoc {
    #[serde(default)]
    role: Option<Role>,
    #[serde(default = "match_all")]
    pattern: String,
    response: String,
}

fn match_all() -> String {
    ".*".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct PlaybookDoc {
    #[serde(default)]
    rules: Vec<RuleDoc>,
    #[serde(default)]
    default_response: Option<String>,
}

/// One playbook entry. `role: None` matches every role.
#[derive(Debug, Clone)]
pub struct PlaybookRule {
    pub role: Option<Role>,
    pub pattern: Regex,
    pub response: String,
}

impl PlaybookRule {
    pub fn new(role: Option<Role>, pattern: &str, response: impl Into<String>) -> Result<Self, LlmError> {
        let pattern = Regex::new(pattern).map_err(|e| LlmError::Playbook(format!("pattern {pattern:?}: {e}")))?;
        Ok(PlaybookRule { role, pattern, response: response.into() })
    }

    fn matches(&self, request: &ChatRequest, text: &str) -> bool {
        self.role.is_none_or(|r| r == request.role) && self.pattern.is_match(text)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Playbook {
    pub rules: Vec<PlaybookRule>,
    pub default_response: Option<String>,
}

impl Playbook {
    pub fn from_rules(rules: Vec<PlaybookRule>) -> Self {
        Playbook { rules, default_response: None }
    }

    fn from_doc(doc: PlaybookDoc) -> Result<Self, LlmError> {
        let rules = doc
            .rules
            .into_iter()
            .map(|r| PlaybookRule::new(r.role, &r.pattern, r.response))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Playbook { rules, default_response: doc.default_response })
    }

    /// Parses JSON: either `{"rules": [...], "default_response": ...}` or a
    /// bare array of rules.
    pub fn from_json(text: &str) -> Result<Self, LlmError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| LlmError::Playbook(e.to_string()))?;
        let doc = if value.is_array() {
            PlaybookDoc {
                rules: serde_json::from_value(value).map_err(|e| LlmError::Playbook(e.to_string()))?,
                default_response: None,
            }
        } else {
            serde_json::from_value(value).map_err(|e| LlmError::Playbook(e.to_string()))?
        };
        Self::from_doc(doc)
    }

    /// Parses TOML with `[[rules]]` tables.
    pub fn from_toml(text: &str) -> Result<Self, LlmError> {
        Self::from_doc(toml::from_str(text).map_err(|e| LlmError::Playbook(e.to_string()))?)
    }

    /// Loads a playbook file; the extension picks the format.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            Some("json") => Self::from_json(&text),
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text)),
        }
    }

    fn doc(&self) -> PlaybookDoc {
        PlaybookDoc {
            rules: self
                .rules
                .iter()
                .map(|r| RuleDoc { role: r.role, pattern: r.pattern.as_str().to_string(), response: r.response.clone() })
                .collect(),
            default_response: self.default_response.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc()).expect("playbook serializes")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.doc()).expect("playbook serializes")
    }

    /// First matching response, else the default.
    pub fn respond(&self, request: &ChatRequest) -> &str {
        let text = request.text();
        self.rules
            .iter()
            .find(|r| r.matches(request, &text))
            .map(|r| r.response.as_str())
            .or(self.default_response.as_deref())
            .unwrap_or(DEFAULT_MOCK_RESPONSE)
    }
}

/// Playbook-backed backend. Every request is kept for inspection.
#[derive(Debug, Default)]
pub struct MockBackend {
    playbook: Playbook,
    transcript: Mutex<Vec<ChatRequest>>,
}

impl MockBackend {
    pub fn new(playbook: Playbook) -> Self {
        MockBackend { playbook, transcript: Mutex::new(Vec::new()) }
    }

    pub fn transcript(&self) -> Vec<ChatRequest> {
        self.transcript.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        "mock".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.transcript.lock().unwrap_or_else(|e| e.into_inner()).push(request.clone());
        Ok(self.playbook.respond(request).to_string())
    }
}
