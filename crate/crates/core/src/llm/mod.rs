//! The generative policy: prompt construction, pluggable backends and the
//! metadata-only privacy guard.

mod mock;
pub mod privacy;
mod prompt;
mod remote;

pub use mock::{MockBackend, Playbook, PlaybookRule, DEFAULT_MOCK_RESPONSE};
pub use prompt::{
    build_prompt, build_prompt_with_budget, check_context, DEBUG_FEEDBACK_CHARS, JUDGE_ARCHIVE_LIMIT,
    PROMPT_CHAR_BUDGET, PROMPT_TOKEN_BUDGET, SCRIPT_CONTRACT, TEMPLATE_VERSION,
};
pub use remote::{ChatCompletionsBackend, API_KEY_ENV};

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{ModelCard, PriorDigest, Summarizer};
use crate::reward::{ArchiveEntry, NoveltyJudge};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    DraftRoot,
    Refine,
    Debug,
    Summarize,
    NoveltyJudge,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::DraftRoot, Role::Refine, Role::Debug, Role::Summarize, Role::NoveltyJudge];

    /// Roles whose reply must contain a script.
    pub fn is_code_role(self) -> bool {
        matches!(self, Role::DraftRoot | Role::Refine | Role::Debug)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::DraftRoot => "DRAFT_ROOT",
            Role::Refine => "REFINE",
            Role::Debug => "DEBUG",
            Role::Summarize => "SUMMARIZE",
            Role::NoveltyJudge => "NOVELTY_JUDGE",
        }
    }

    pub fn default_temperature(self) -> f64 {
        match self {
            Role::NoveltyJudge => 0.0,
            _ => 0.7,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("task field `{0}` must be non-empty")]
    EmptyField(&'static str),
    #[error("data directory {0} does not exist")]
    MissingDataDir(PathBuf),
    #[error("invalid task document {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// What the run is for: goal, how it is judged, where the data lives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub goal: String,
    pub evaluation_criteria: String,
    pub data_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_constraints: Option<String>,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        if self.goal.trim().is_empty() {
            return Err(TaskError::EmptyField("goal"));
        }
        if self.evaluation_criteria.trim().is_empty() {
            return Err(TaskError::EmptyField("evaluation_criteria"));
        }
        if !self.data_dir.is_dir() {
            return Err(TaskError::MissingDataDir(self.data_dir.clone()));
        }
        Ok(())
    }

    /// Reads a TOML task document. A relative `data_dir` is resolved
    /// against the document's directory.
    pub fn load(path: &Path) -> Result<TaskSpec, TaskError> {
        let text = fs::read_to_string(path)?;
        let mut task: TaskSpec =
            toml::from_str(&text).map_err(|e| TaskError::Parse { path: path.to_path_buf(), reason: e.to_string() })?;
        if task.data_dir.is_relative() {
            if let Some(base) = path.parent() {
                task.data_dir = base.join(&task.data_dir);
            }
        }
        task.validate()?;
        Ok(task)
    }
}

/// Everything a prompt may be conditioned on.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub role: Role,
    pub task: TaskSpec,
    /// Rendered constraint descriptor.
    pub constraints: Option<String>,
    pub priors: Option<PriorDigest>,
    pub parent_script: Option<String>,
    /// Metrics summary (REFINE) or captured error output (DEBUG).
    pub parent_feedback: Option<String>,
    /// Card text (SUMMARIZE) or candidate script (NOVELTY_JUDGE).
    pub subject: Option<String>,
    pub archive_rationales: Vec<String>,
    /// Interpreter and allowed packages, shown to code roles.
    pub environment: Option<String>,
    /// Extra instruction for root drafts, e.g. after a redraft.
    pub note: Option<String>,
    /// Root drafts without constraints and priors.
    pub unconditioned: bool,
}

impl PromptContext {
    pub fn new(role: Role, task: TaskSpec) -> Self {
        PromptContext {
            role,
            task,
            constraints: None,
            priors: None,
            parent_script: None,
            parent_feedback: None,
            subject: None,
            archive_rationales: Vec::new(),
            environment: None,
            note: None,
            unconditioned: false,
        }
    }

    pub fn draft_root(task: TaskSpec, constraints: Option<String>, priors: Option<PriorDigest>) -> Self {
        let unconditioned = constraints.is_none() && priors.is_none();
        PromptContext { constraints, priors, unconditioned, ..Self::new(Role::DraftRoot, task) }
    }

    pub fn refine(task: TaskSpec, parent_script: impl Into<String>, feedback: impl Into<String>) -> Self {
        PromptContext {
            parent_script: Some(parent_script.into()),
            parent_feedback: Some(feedback.into()),
            ..Self::new(Role::Refine, task)
        }
    }

    pub fn debug(task: TaskSpec, parent_script: impl Into<String>, error_output: impl Into<String>) -> Self {
        PromptContext {
            parent_script: Some(parent_script.into()),
            parent_feedback: Some(error_output.into()),
            ..Self::new(Role::Debug, task)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message { role: "user".into(), content: content.into() }
    }
}

/// A rendered prompt document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub role: Role,
    pub temperature: f64,
    pub messages: Vec<Message>,
}

impl ChatRequest {
    /// All message contents joined; what mock patterns match against.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub script: String,
    pub rationale: String,
    pub raw: String,
    pub backend_id: String,
}

/// Failure reported by a backend for one call.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("backend rejected the request: {0}")]
    Fatal(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, BackendError::Fatal(_))
    }
}

/// A generative backend. Implementations must be shareable across workers.
pub trait Backend: Send + Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid prompt context: {0}")]
    ContextInvalid(String),
    #[error("backend unreachable after {attempts} attempts: {last}")]
    BackendUnreachable { attempts: u32, last: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("{0} reply contained no code block")]
    GenerationEmpty(Role),
    #[error("invalid playbook: {0}")]
    Playbook(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl LlmError {
    /// Errors that should stop a run rather than count as a failed job.
    pub fn is_fatal(&self) -> bool {
        matches!(self, LlmError::BackendUnreachable { .. } | LlmError::Backend(_) | LlmError::Config(_))
    }
}

/// Transport retries: `retries` extra attempts, doubling from `base_delay`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

/// First fenced code block and the text around it.
pub fn extract_code_block(raw: &str) -> Option<(String, String)> {
    static FENCE: OnceLock<Regex> = OnceLock::new();
    let re = FENCE.get_or_init(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)```").unwrap());
    let m = re.captures(raw)?;
    let whole = m.get(0)?;
    let script = m[1].to_string();
    let rationale = format!("{}{}", &raw[..whole.start()], &raw[whole.end()..]).trim().to_string();
    Some((script, rationale))
}

struct Slots {
    cap: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut used = self.used.lock().unwrap_or_else(|e| e.into_inner());
        while *used >= self.cap {
            used = self.freed.wait(used).unwrap_or_else(|e| e.into_inner());
        }
        *used += 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|e| e.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Serialize)]
struct CallLog<'a> {
    call: u64,
    template: &'a str,
    backend: String,
    request: &'a ChatRequest,
    attempts: u32,
    response: Option<&'a str>,
    error: Option<String>,
}

/// Shared front end over one backend: retries, in-flight cap, call logs.
pub struct Gateway {
    backend: Box<dyn Backend>,
    retry: RetryPolicy,
    log_dir: Option<PathBuf>,
    calls: AtomicU64,
    slots: Slots,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway").field("backend", &self.backend.id()).field("retry", &self.retry).finish()
    }
}

impl Gateway {
    pub fn new(backend: Box<dyn Backend>) -> Self {
        Gateway {
            backend,
            retry: RetryPolicy::default(),
            log_dir: None,
            calls: AtomicU64::new(0),
            slots: Slots { cap: usize::MAX, used: Mutex::new(0), freed: Condvar::new() },
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Bounds the number of outstanding backend calls.
    pub fn with_max_in_flight(mut self, cap: usize) -> Self {
        self.slots.cap = cap.max(1);
        self
    }

    /// Writes one JSON file per call into `dir`.
    pub fn with_log_dir(mut self, dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        self.log_dir = Some(dir);
        Ok(self)
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    fn log(&self, call: u64, request: &ChatRequest, attempts: u32, result: &Result<String, BackendError>) {
        let Some(dir) = &self.log_dir else { return };
        let entry = CallLog {
            call,
            template: TEMPLATE_VERSION,
            backend: self.backend.id(),
            request,
            attempts,
            response: result.as_ref().ok().map(String::as_str),
            error: result.as_ref().err().map(|e| e.to_string()),
        };
        let path = dir.join(format!("call-{call:06}-{}.json", request.role.as_str().to_lowercase()));
        if let Ok(text) = serde_json::to_string_pretty(&entry) {
            let _ = fs::write(path, text);
        }
    }

    /// Sends a rendered request, retrying transport failures.
    pub fn send(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        let _slot = self.slots.acquire();
        let mut attempts = 0;
        let result = loop {
            attempts += 1;
            match self.backend.complete(request) {
                Err(e) if e.is_retryable() && attempts <= self.retry.retries => {
                    std::thread::sleep(self.retry.delay(attempts - 1));
                }
                other => break other,
            }
        };
        self.log(call, request, attempts, &result);
        match result {
            Ok(text) => Ok(text),
            Err(e) if e.is_retryable() => Err(LlmError::BackendUnreachable { attempts, last: e.to_string() }),
            Err(e) => Err(LlmError::Backend(e.to_string())),
        }
    }

    /// Renders the prompt for `ctx` and returns the backend's raw reply.
    pub fn complete(&self, ctx: &PromptContext) -> Result<String, LlmError> {
        self.send(&build_prompt(ctx)?)
    }

    /// Generates a script for a code role.
    pub fn generate(&self, ctx: &PromptContext) -> Result<GenerationResult, LlmError> {
        let request = build_prompt(ctx)?;
        let raw = self.send(&request)?;
        let backend_id = self.backend.id();
        match extract_code_block(&raw) {
            Some((script, rationale)) if !script.trim().is_empty() => {
                Ok(GenerationResult { script, rationale, raw, backend_id })
            }
            _ if ctx.role.is_code_role() => Err(LlmError::GenerationEmpty(ctx.role)),
            _ => Ok(GenerationResult { script: String::new(), rationale: raw.trim().to_string(), raw, backend_id }),
        }
    }
}

/// Card condensation through the gateway.
pub struct GatewaySummarizer<'a> {
    pub gateway: &'a Gateway,
    pub task: TaskSpec,
}

impl Summarizer for GatewaySummarizer<'_> {
    fn id(&self) -> String {
        self.gateway.backend_id()
    }

    fn condense(&self, card: &ModelCard) -> Result<String, String> {
        let subject = format!(
            "{} ({})\n{}\nSuitable tasks: {}",
            card.name,
            card.category,
            card.summary.trim(),
            card.suitable_tasks.join(", ")
        );
        let ctx = PromptContext { subject: Some(subject), ..PromptContext::new(Role::Summarize, self.task.clone()) };
        self.gateway.complete(&ctx).map_err(|e| e.to_string())
    }
}

/// Novelty judging through the gateway.
pub struct GatewayJudge<'a> {
    pub gateway: &'a Gateway,
    pub task: TaskSpec,
}

impl NoveltyJudge for GatewayJudge<'_> {
    fn judge(&self, script: &str, archive: &[ArchiveEntry]) -> Result<String, String> {
        let ctx = PromptContext {
            subject: Some(script.to_string()),
            archive_rationales: archive.iter().map(|e| e.rationale.clone()).collect(),
            ..PromptContext::new(Role::NoveltyJudge, self.task.clone())
        };
        self.gateway.complete(&ctx).map_err(|e| e.to_string())
    }
}
