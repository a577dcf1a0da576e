//! Search parameters and the run configuration document.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SearchError;
use crate::llm::{ChatCompletionsBackend, Gateway, LlmError, MockBackend, Playbook};
use crate::reward::RewardWeights;
use crate::sandbox::{ExecutorConfig, DEFAULT_ALLOW_LIST, DEFAULT_ENV_PASSTHROUGH};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    /// Draft the root without constraints and priors.
    pub disable_domain_init: bool,
    /// Greedy chain with performance-only reward.
    pub disable_moeo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Maximum expansion jobs, and so maximum nodes.
    pub iteration_budget: usize,
    pub parallelism: usize,
    pub tau_max: f64,
    pub weights: RewardWeights,
    pub selection_temperature: f64,
    pub debug_retry_cap: usize,
    /// Completed jobs without a best-so-far improvement before stopping.
    pub patience: usize,
    pub random_seed: u64,
    pub ablation_flags: AblationFlags,
    pub max_redrafts: usize,
    pub root_attempts: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            iteration_budget: 200,
            parallelism: 3,
            tau_max: 600.0,
            weights: RewardWeights::default(),
            selection_temperature: 0.25,
            debug_retry_cap: 3,
            patience: 30,
            random_seed: 0,
            ablation_flags: AblationFlags::default(),
            max_redrafts: 2,
            root_attempts: 3,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: &str| Err(SearchError::InvalidConfig(m.into()));
        if self.iteration_budget < 1 {
            return bad("iteration_budget must be at least 1");
        }
        if self.parallelism < 1 {
            return bad("parallelism must be at least 1");
        }
        if self.patience < 1 {
            return bad("patience must be at least 1");
        }
        if self.root_attempts < 1 {
            return bad("root_attempts must be at least 1");
        }
        if !(self.selection_temperature > 0.0 && self.selection_temperature.is_finite()) {
            return bad("selection_temperature must be positive");
        }
        if !(self.tau_max > 0.0 && self.tau_max.is_finite()) {
            return bad("tau_max must be positive");
        }
        self.weights.validate().map_err(|e| SearchError::InvalidConfig(e.to_string()))
    }

    /// Weights actually used for scoring.
    pub fn effective_weights(&self) -> RewardWeights {
        if self.ablation_flags.disable_moeo {
            RewardWeights::PERFORMANCE_ONLY
        } else {
            self.weights
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoveltyMode {
    /// Shingle-overlap estimate; no backend calls.
    #[default]
    Lexical,
    /// Ask the backend, falling back to the lexical estimate.
    Judge,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizerMode {
    /// Card summaries verbatim.
    #[default]
    None,
    /// Condense each card through the backend.
    Backend,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Mock {
        playbook: Option<PathBuf>,
    },
    Remote {
        endpoint: String,
        model: String,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
    },
}

fn default_timeout() -> f64 {
    120.0
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { playbook: None }
    }
}

/// The `run.toml` document: search parameters plus execution and backend
/// settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub search: SearchConfig,
    pub interpreter_cmd: Vec<String>,
    pub syntax_check_cmd: Option<Vec<String>>,
    pub allow_list: Vec<String>,
    pub kill_factor: f64,
    pub env_passthrough: Vec<String>,
    pub timing_resolution: f64,
    pub script_extension: Option<String>,
    /// Recordings sampled for quality metrics.
    pub sample_budget: usize,
    /// Catalog directory or file; the bundled catalog when unset.
    pub catalog: Option<PathBuf>,
    pub novelty: NoveltyMode,
    pub summarizer: SummarizerMode,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let exec = ExecutorConfig::default();
        RunConfig {
            search: SearchConfig::default(),
            interpreter_cmd: exec.interpreter_cmd,
            syntax_check_cmd: None,
            allow_list: DEFAULT_ALLOW_LIST.iter().map(|s| s.to_string()).collect(),
            kill_factor: exec.kill_factor,
            env_passthrough: DEFAULT_ENV_PASSTHROUGH.iter().map(|s| s.to_string()).collect(),
            timing_resolution: 0.0,
            script_extension: None,
            sample_budget: crate::eeg::probe::DEFAULT_SAMPLE_BUDGET,
            catalog: None,
            novelty: NoveltyMode::Lexical,
            summarizer: SummarizerMode::None,
            backend: BackendConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML document; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<RunConfig, SearchError> {
        let text = std::fs::read_to_string(path).map_err(|e| SearchError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| SearchError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(c) = &cfg.catalog {
            cfg.catalog = Some(base.join(c));
        }
        if let BackendConfig::Mock { playbook: Some(p) } = &cfg.backend {
            cfg.backend = BackendConfig::Mock { playbook: Some(base.join(p)) };
        }
        cfg.search.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn executor_config(&self) -> ExecutorConfig {
        ExecutorConfig {
            interpreter_cmd: self.interpreter_cmd.clone(),
            syntax_check_cmd: self.syntax_check_cmd.clone(),
            allow_list: self.allow_list.clone(),
            tau_max: self.search.tau_max,
            kill_factor: self.kill_factor,
            env_passthrough: self.env_passthrough.clone(),
            timing_resolution: self.timing_resolution,
            script_extension: self.script_extension.clone(),
        }
    }

    /// Builds the gateway. `mock` overrides the configured backend.
    pub fn gateway(&self, mock: Option<&Path>, log_dir: &Path) -> Result<Gateway, LlmError> {
        let gateway = match (mock, &self.backend) {
            (Some(path), _) => Gateway::new(Box::new(MockBackend::new(Playbook::load(path)?))),
            (None, BackendConfig::Mock { playbook }) => {
                let pb = match playbook {
                    Some(p) => Playbook::load(p)?,
                    None => Playbook::default(),
                };
                Gateway::new(Box::new(MockBackend::new(pb)))
            }
            (None, BackendConfig::Remote { endpoint, model, timeout_s }) => Gateway::new(Box::new(
                ChatCompletionsBackend::from_env(endpoint.clone(), model.clone(), Duration::from_secs_f64(*timeout_s))?,
            )),
        };
        Ok(gateway.with_max_in_flight(self.search.parallelism).with_log_dir(log_dir)?)
    }
}
