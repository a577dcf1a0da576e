//! The closed search loop: select, generate, validate, execute, score,
//! insert, until the budget or patience runs out.
//!
//! One coordinator thread owns the tree and the journal. A fixed pool of
//! `parallelism` workers runs expansion jobs. Results are consumed in
//! dispatch order, so a seed and a deterministic backend fully determine
//! the journal regardless of how workers interleave.

mod config;
mod policy;
mod report;

pub use config::{AblationFlags, BackendConfig, NoveltyMode, RunConfig, SearchConfig, SummarizerMode};
pub use policy::{debug_streak, expandable, route_action, select_expansion, softmax_sample, Action};
pub use report::{emit_report, load_run, RunMeta, RunReport, REPORT_FILES, RUN_META_FILE};

use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::eeg::{probe, ProbeError};
use crate::knowledge::{select_candidates, summarize_priors, Catalog, CatalogError, PriorDigest};
use crate::llm::{Gateway, GatewayJudge, GatewaySummarizer, LlmError, PromptContext, Role, TaskError, TaskSpec};
use crate::reward::{compose_reward, novelty_term, ArchiveEntry, NoveltyJudge, RewardError, RewardWeights};
use crate::sandbox::{tail, ExecutionOutcome, ExecutionStatus, Executor, SandboxError};
use crate::tree::{Journal, JournalError, NodeId, NodeKind, NodeStatus, SolutionNode, SolutionTree, TreeError};

pub const JOURNAL_FILE: &str = "tree.journal";
pub const CONSTRAINTS_FILE: &str = "constraints.json";
pub const LLM_LOG_DIR: &str = "llm_log";
pub const SCRATCH_DIR: &str = "scratch";

/// stdout characters included in REFINE feedback.
const FEEDBACK_STDOUT_CHARS: usize = 1500;

const REDRAFT_NOTE: &str = "Every earlier draft and its repairs failed. Start over with a different, \
simpler design that is more likely to run cleanly.";

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("probing the data directory failed: {0}")]
    ProbeFailed(#[from] ProbeError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("root generation failed after {attempts} attempts: {last}")]
    RootGenerationFailed { attempts: usize, last: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Sandbox(#[from] SandboxError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("no expandable nodes")]
    NoExpandableNodes,
    #[error("node {0} has no outcome")]
    NodeUnscored(NodeId),
    #[error("writing {path}: {source}")]
    WriteFailed { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Shared services a run needs.
pub struct SearchEnv<'a> {
    pub gateway: &'a Gateway,
    pub executor: &'a Executor,
    pub catalog: &'a Catalog,
    pub workdir: PathBuf,
    pub sample_budget: usize,
    pub novelty: NoveltyMode,
    pub summarizer: SummarizerMode,
}

struct Job {
    id: NodeId,
    parent: Option<NodeId>,
    kind: NodeKind,
    ctx: PromptContext,
    parent_performance: Option<f64>,
    archive: Arc<Vec<ArchiveEntry>>,
}

enum JobError {
    /// The job produced no node; the run continues.
    Skipped(LlmError),
    /// The run cannot continue.
    Fatal(SearchError),
}

fn run_job(job: &Job, env: &SearchEnv<'_>, tau_max: f64, weights: &RewardWeights) -> Result<SolutionNode, JobError> {
    let generated = env.gateway.generate(&job.ctx).map_err(|e| match e {
        e if e.is_fatal() => JobError::Fatal(e.into()),
        e => JobError::Skipped(e),
    })?;
    let report = env.executor.validate(&generated.script);
    let outcome = if report.is_clean() {
        let fatal = |e: SearchError| JobError::Fatal(e);
        let scratch = env.executor.fresh_scratch(&format!("node-{}", job.id)).map_err(|e| fatal(e.into()))?;
        env.executor
            .execute_in(&generated.script, &job.ctx.task.data_dir, &scratch)
            .map_err(|e| fatal(e.into()))?
    } else {
        ExecutionOutcome::rejected(&report, 0.0)
    };
    let judge = GatewayJudge { gateway: env.gateway, task: job.ctx.task.clone() };
    let judge: Option<&dyn NoveltyJudge> = match env.novelty {
        NoveltyMode::Judge => Some(&judge),
        NoveltyMode::Lexical => None,
    };
    let (novelty, _) = novelty_term(&generated.script, &job.archive, judge);
    let reward = compose_reward(outcome.metrics.as_ref(), job.parent_performance, &outcome, novelty, weights, tau_max)
        .map_err(|e| JobError::Fatal(e.into()))?;
    let mut node = SolutionNode::drafted(job.id, job.parent, job.kind, generated.script);
    node.rationale = generated.rationale;
    node.status = if outcome.status == ExecutionStatus::Success { NodeStatus::Executed } else { NodeStatus::Failed };
    node.outcome = Some(outcome);
    node.reward = Some(reward);
    Ok(node)
}

/// Feedback shown to the generator when expanding `node`.
pub fn feedback_for(node: &SolutionNode, tau_max: f64) -> String {
    let Some(o) = &node.outcome else {
        return "The parent has not been executed.".into();
    };
    let mut out = String::new();
    match o.status {
        ExecutionStatus::Success => {
            out.push_str("status: SUCCESS\n");
            if let Some(m) = &o.metrics {
                out.push_str(&format!("primary_metric: {} ({})\n", m.primary_metric, m.metric_name));
                for (k, v) in &m.auxiliary {
                    out.push_str(&format!("auxiliary {k}: {v}\n"));
                }
            }
            out.push_str(&format!("runtime_s: {:.2} (soft budget {tau_max} s)\n", o.tau_s));
        }
        ExecutionStatus::Timeout => {
            out.push_str(&format!(
                "status: TIMEOUT\nThe script hit the timeout and was killed after {:.2} s (soft budget {tau_max} s). \
                 Make the pipeline substantially cheaper.\n",
                o.tau_s
            ));
        }
        status => {
            let code = o.exit_code.map_or_else(|| "none".to_string(), |c| c.to_string());
            out.push_str(&format!("status: {status:?} (exit code {code})\n"));
        }
    }
    if let Some(r) = &node.reward {
        out.push_str(&format!(
            "reward: total {:.4} (performance {:.4}, improvement {:.4}, novelty {:.4}, efficiency {:.4}, executability {:.0})\n",
            r.total, r.performance, r.improvement, r.novelty, r.efficiency, r.debug
        ));
    }
    let stdout = o.stdout_tail.trim();
    if !stdout.is_empty() {
        out.push_str(&format!("stdout (tail):\n{}\n", tail(stdout, FEEDBACK_STDOUT_CHARS)));
    }
    let stderr = o.stderr_tail.trim();
    if o.status != ExecutionStatus::Success && !stderr.is_empty() {
        out.push_str(&format!("error output:\n{stderr}\n"));
    }
    out
}

fn environment_text(executor: &Executor) -> String {
    let cfg = executor.config();
    format!(
        "Interpreter: {}\nScript file extension: .{}\nAllowed third-party packages: {}\nSoft time budget: {} s per run; runs are killed after {} s.",
        cfg.interpreter_cmd.join(" "),
        cfg.extension(),
        if cfg.allow_list.is_empty() { "(none)".to_string() } else { cfg.allow_list.join(", ") },
        cfg.tau_max,
        cfg.kill_cap()
    )
}

fn write(path: PathBuf, contents: &str) -> Result<(), SearchError> {
    fs::write(&path, contents).map_err(|source| SearchError::WriteFailed { path, source })
}

struct Coordinator<'e> {
    cfg: &'e SearchConfig,
    task: &'e TaskSpec,
    tree: SolutionTree,
    rng: ChaCha8Rng,
    archive: Vec<ArchiveEntry>,
    constraints: Option<String>,
    priors: Option<PriorDigest>,
    environment: String,
    next_id: u64,
    dispatched: usize,
    root_attempts: usize,
    redrafts: usize,
    skipped: usize,
    last_skip: String,
    best: Option<f64>,
    since_improvement: usize,
    stop: Option<String>,
    fatal: Option<SearchError>,
}

impl Coordinator<'_> {
    fn context(&self, role: Role) -> PromptContext {
        PromptContext {
            constraints: self.constraints.clone(),
            priors: self.priors.clone(),
            environment: Some(self.environment.clone()),
            ..PromptContext::new(role, self.task.clone())
        }
    }

    fn job(&mut self, parent: Option<NodeId>, kind: NodeKind, ctx: PromptContext) -> Job {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        let parent_performance = match kind {
            NodeKind::Refine | NodeKind::DebugChild => parent.and_then(|p| self.tree.get(p)).and_then(|n| n.performance()),
            NodeKind::Root | NodeKind::Redraft => None,
        };
        Job { id, parent, kind, ctx, parent_performance, archive: Arc::new(self.archive.clone()) }
    }

    fn root_job(&mut self, kind: NodeKind, note: Option<&str>) -> Job {
        let mut ctx = self.context(Role::DraftRoot);
        ctx.unconditioned = self.cfg.ablation_flags.disable_domain_init;
        ctx.note = note.map(String::from);
        let parent = if kind == NodeKind::Redraft { self.tree.root_id() } else { None };
        self.job(parent, kind, ctx)
    }

    /// The next job to dispatch, or `None` to wait for results.
    fn next_job(&mut self, pending: usize) -> Result<Option<Job>, SearchError> {
        if self.tree.root_id().is_none() {
            if pending > 0 {
                return Ok(None);
            }
            if self.root_attempts >= self.cfg.root_attempts {
                return Err(SearchError::RootGenerationFailed {
                    attempts: self.root_attempts,
                    last: self.last_skip.clone(),
                });
            }
            self.root_attempts += 1;
            return Ok(Some(self.root_job(NodeKind::Root, None)));
        }
        match select_expansion(&self.tree, self.cfg, &mut self.rng) {
            Ok((id, action)) => {
                let node = self.tree.get(id).expect("selected node exists");
                let feedback = feedback_for(node, self.cfg.tau_max);
                let (role, kind) = match action {
                    Action::Debug => (Role::Debug, NodeKind::DebugChild),
                    _ => (Role::Refine, NodeKind::Refine),
                };
                let ctx = PromptContext {
                    parent_script: Some(node.script.clone()),
                    parent_feedback: Some(feedback),
                    ..self.context(role)
                };
                Ok(Some(self.job(Some(id), kind, ctx)))
            }
            Err(SearchError::NoExpandableNodes) if pending > 0 => Ok(None),
            Err(SearchError::NoExpandableNodes) if self.cfg.ablation_flags.disable_moeo => {
                self.stop = Some("chain ended".into());
                Ok(None)
            }
            Err(SearchError::NoExpandableNodes) if self.redrafts < self.cfg.max_redrafts => {
                self.redrafts += 1;
                self.tree.note(format!("no expandable nodes; redraft {}", self.redrafts))?;
                Ok(Some(self.root_job(NodeKind::Redraft, Some(REDRAFT_NOTE))))
            }
            Err(SearchError::NoExpandableNodes) => {
                self.stop = Some("no expandable nodes left".into());
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn complete(&mut self, job: &Job, result: Result<SolutionNode, JobError>) -> Result<(), SearchError> {
        match result {
            Ok(node) => {
                self.archive.push(ArchiveEntry { script: node.script.clone(), rationale: node.rationale.clone() });
                let executed = node.status == NodeStatus::Executed;
                let total = node.total();
                self.tree.insert(node)?;
                match (executed, total) {
                    (true, Some(t)) if self.best.is_none_or(|b| t > b) => {
                        self.best = Some(t);
                        self.since_improvement = 0;
                    }
                    _ => self.since_improvement += 1,
                }
            }
            Err(JobError::Skipped(e)) => {
                self.skipped += 1;
                self.since_improvement += 1;
                self.last_skip = e.to_string();
                self.tree.note(format!("job {} produced no node: {e}", job.id))?;
            }
            Err(JobError::Fatal(e)) => {
                self.tree.note(format!("job {} aborted the run: {e}", job.id))?;
                if self.fatal.is_none() {
                    self.stop = Some(format!("aborted: {e}"));
                    self.fatal = Some(e);
                }
            }
        }
        self.tree.end_expansion(job.id, job.parent)?;
        if self.stop.is_none() && self.since_improvement >= self.cfg.patience {
            self.stop = Some(format!("converged: no improvement in {} iterations", self.cfg.patience));
        }
        Ok(())
    }
}

/// Runs a full search and writes the report files into `env.workdir`.
pub fn run_search(task: &TaskSpec, cfg: &SearchConfig, env: &SearchEnv<'_>) -> Result<RunReport, SearchError> {
    task.validate()?;
    cfg.validate()?;
    let workdir = &env.workdir;
    fs::create_dir_all(workdir)?;

    let (descriptor, priors) = if cfg.ablation_flags.disable_domain_init {
        (None, None)
    } else {
        let constraints = probe(&task.data_dir, env.sample_budget)?;
        let descriptor = constraints.descriptor(Some(&task.data_dir));
        let candidates = select_candidates(&task.goal, env.catalog)?;
        let summarizer = GatewaySummarizer { gateway: env.gateway, task: task.clone() };
        let summarizer: Option<&dyn crate::knowledge::Summarizer> = match env.summarizer {
            SummarizerMode::Backend => Some(&summarizer),
            SummarizerMode::None => None,
        };
        let digest = summarize_priors(&candidates, &env.catalog.version, summarizer)?;
        (Some(descriptor), Some(digest))
    };
    let constraints_text = descriptor.as_ref().map(|d| serde_json::to_string_pretty(d).expect("descriptor serializes"));
    if let Some(text) = &constraints_text {
        write(workdir.join(CONSTRAINTS_FILE), text)?;
    }
    let meta = RunMeta {
        task: task.clone(),
        search: cfg.clone(),
        script_extension: env.executor.config().extension(),
        backend: env.gateway.backend_id(),
        constraints: descriptor,
        priors: priors.clone(),
    };
    write(workdir.join(RUN_META_FILE), &serde_json::to_string_pretty(&meta).expect("meta serializes"))?;

    let journal = Journal::create(&workdir.join(JOURNAL_FILE))?;
    let mut co = Coordinator {
        cfg,
        task,
        tree: SolutionTree::with_journal(journal),
        rng: ChaCha8Rng::seed_from_u64(cfg.random_seed),
        archive: Vec::new(),
        constraints: constraints_text,
        priors,
        environment: environment_text(env.executor),
        next_id: 0,
        dispatched: 0,
        root_attempts: 0,
        redrafts: 0,
        skipped: 0,
        last_skip: String::new(),
        best: None,
        since_improvement: 0,
        stop: None,
        fatal: None,
    };
    let weights = cfg.effective_weights();

    let loop_result: Result<(), SearchError> = std::thread::scope(|scope| {
        let (job_tx, job_rx) = mpsc::channel::<Arc<Job>>();
        let (done_tx, done_rx) = mpsc::channel::<(NodeId, Result<SolutionNode, JobError>)>();
        let job_rx = Arc::new(Mutex::new(job_rx));
        for _ in 0..cfg.parallelism {
            let job_rx = Arc::clone(&job_rx);
            let done_tx = done_tx.clone();
            scope.spawn(move || loop {
                let job = match job_rx.lock().unwrap_or_else(|e| e.into_inner()).recv() {
                    Ok(job) => job,
                    Err(_) => break,
                };
                let result = run_job(&job, env, cfg.tau_max, &weights);
                if done_tx.send((job.id, result)).is_err() {
                    break;
                }
            });
        }
        drop(done_tx);

        let mut pending: VecDeque<Arc<Job>> = VecDeque::new();
        let mut finished: BTreeMap<NodeId, Result<SolutionNode, JobError>> = BTreeMap::new();
        loop {
            while co.stop.is_none() && pending.len() < cfg.parallelism && co.dispatched < cfg.iteration_budget {
                let Some(job) = co.next_job(pending.len())? else { break };
                let action = match job.kind {
                    NodeKind::Root => "DRAFT_ROOT",
                    NodeKind::Redraft => "REDRAFT",
                    NodeKind::Refine => "REFINE",
                    NodeKind::DebugChild => "DEBUG",
                };
                co.tree.begin_expansion(job.id, job.parent, action)?;
                co.dispatched += 1;
                let job = Arc::new(job);
                pending.push_back(Arc::clone(&job));
                job_tx.send(job).expect("workers alive while jobs are pending");
            }
            let Some(head) = pending.pop_front() else { break };
            let result = loop {
                if let Some(r) = finished.remove(&head.id) {
                    break r;
                }
                let (id, r) = done_rx.recv().expect("a worker reports every job");
                finished.insert(id, r);
            };
            co.complete(&head, result)?;
        }
        drop(job_tx);
        Ok(())
    });
    loop_result?;

    let stop = co.stop.clone().unwrap_or_else(|| {
        if co.dispatched >= cfg.iteration_budget {
            "iteration budget exhausted".into()
        } else {
            "search finished".into()
        }
    });
    co.tree.note(format!("stopped: {stop}"))?;
    let report = RunReport::assemble(&co.tree, co.dispatched, co.skipped, stop);
    if co.tree.root_id().is_some() {
        emit_report(&report, &meta, workdir)?;
    }
    match co.fatal {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Builds the gateway, executor and catalog described by `run` and runs the
/// search in `workdir`.
pub fn run_with_config(task: &TaskSpec, run: &RunConfig, workdir: &Path, mock: Option<&Path>) -> Result<RunReport, SearchError> {
    fs::create_dir_all(workdir)?;
    let gateway = run.gateway(mock, &workdir.join(LLM_LOG_DIR))?;
    let executor = Executor::new(run.executor_config(), workdir.join(SCRATCH_DIR));
    let catalog = match &run.catalog {
        Some(path) => crate::knowledge::load_catalog(path)?,
        None => Catalog::bundled(),
    };
    let env = SearchEnv {
        gateway: &gateway,
        executor: &executor,
        catalog: &catalog,
        workdir: workdir.to_path_buf(),
        sample_budget: run.sample_budget,
        novelty: run.novelty,
        summarizer: run.summarizer,
    };
    run_search(task, &run.search, &env)
}
