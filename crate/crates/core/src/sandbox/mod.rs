//! Runs candidate scripts as isolated child processes.
//!
//! Each execution gets a fresh scratch directory that doubles as the
//! script's working and output directory. The child is started in its own
//! process group with a scrubbed environment and is killed as a group once
//! the hard cap (`kill_factor * tau_max`) elapses.
//!
//! Invocation: `interpreter_cmd... <script> --data-dir <DIR> --output-dir <SCRATCH>`.

mod metrics;
mod validate;

pub use metrics::{parse_metrics, parse_metrics_str, MetricReport, MetricsError, METRICS_FILE};
pub use validate::{declared_modules, validate_environment, Finding, FindingKind, ValidationReport};

use std::fs::{self, File};
use std::io::{self, Read, Seek, SeekFrom};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Characters of stdout/stderr retained in an outcome.
pub const TAIL_CHARS: usize = 8000;
pub const STDOUT_LOG: &str = "stdout.log";
pub const STDERR_LOG: &str = "stderr.log";

/// Variables copied from the engine's environment into the child.
pub const DEFAULT_ENV_PASSTHROUGH: &[&str] = &["PATH", "LANG", "LC_ALL", "TZ", "PYTHONPATH", "VIRTUAL_ENV"];

/// Import names of the script-side companion stack.
pub const DEFAULT_ALLOW_LIST: &[&str] = &["numpy", "scipy", "mne", "sklearn", "torch", "pandas", "nw_taskkit"];

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("failed to start interpreter `{cmd}`: {source}")]
    SpawnFailure { cmd: String, source: io::Error },
    #[error("interpreter command is empty")]
    NoInterpreter,
    #[error("scratch directory {0} already exists")]
    ScratchExists(PathBuf),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExecutionStatus {
    Success,
    RuntimeError,
    Timeout,
    ValidationError,
    MetricsMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecutionStatus,
    pub exit_code: Option<i32>,
    /// Wall-clock seconds, never above the hard-kill cap.
    pub tau_s: f64,
    pub stdout_tail: String,
    pub stderr_tail: String,
    pub metrics: Option<MetricReport>,
}

impl ExecutionOutcome {
    /// Outcome for a script rejected before execution.
    pub fn rejected(report: &ValidationReport, tau_s: f64) -> Self {
        ExecutionOutcome {
            status: ExecutionStatus::ValidationError,
            exit_code: None,
            tau_s,
            stdout_tail: String::new(),
            stderr_tail: tail(&report.render(), TAIL_CHARS),
            metrics: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptLanguage {
    Python,
    Shell,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    pub interpreter_cmd: Vec<String>,
    /// Parse-only command; `{script}` is replaced by the staged script path.
    pub syntax_check_cmd: Option<Vec<String>>,
    pub allow_list: Vec<String>,
    pub tau_max: f64,
    pub kill_factor: f64,
    pub env_passthrough: Vec<String>,
    /// Measured latencies are rounded up to this many seconds (0 = raw).
    pub timing_resolution: f64,
    pub script_extension: Option<String>,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig {
            interpreter_cmd: vec!["python3".into()],
            syntax_check_cmd: None,
            allow_list: DEFAULT_ALLOW_LIST.iter().map(|s| s.to_string()).collect(),
            tau_max: 600.0,
            kill_factor: 2.0,
            env_passthrough: DEFAULT_ENV_PASSTHROUGH.iter().map(|s| s.to_string()).collect(),
            timing_resolution: 0.0,
            script_extension: None,
        }
    }
}

impl ExecutorConfig {
    pub fn language(&self) -> ScriptLanguage {
        let base = self
            .interpreter_cmd
            .first()
            .map(|c| Path::new(c).file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            .unwrap_or_default();
        if base.starts_with("python") {
            ScriptLanguage::Python
        } else if ["sh", "bash", "dash", "zsh", "ksh"].contains(&base.as_str()) {
            ScriptLanguage::Shell
        } else {
            ScriptLanguage::Other
        }
    }

    pub fn extension(&self) -> String {
        if let Some(ext) = &self.script_extension {
            return ext.clone();
        }
        match self.language() {
            ScriptLanguage::Python => "py".into(),
            ScriptLanguage::Shell => "sh".into(),
            ScriptLanguage::Other => "txt".into(),
        }
    }

    pub fn kill_cap(&self) -> f64 {
        self.kill_factor * self.tau_max
    }
}

/// Last `n` characters of `s`.
pub fn tail(s: &str, n: usize) -> String {
    let count = s.chars().count();
    if count <= n {
        return s.to_string();
    }
    s.chars().skip(count - n).collect()
}

fn read_tail(path: &Path) -> String {
    let Ok(mut f) = File::open(path) else {
        return String::new();
    };
    // Four bytes per char is the UTF-8 worst case.
    let keep = (TAIL_CHARS * 4) as u64;
    let len = f.metadata().map(|m| m.len()).unwrap_or(0);
    if len > keep {
        let _ = f.seek(SeekFrom::Start(len - keep));
    }
    let mut buf = Vec::new();
    let _ = f.read_to_end(&mut buf);
    tail(&String::from_utf8_lossy(&buf), TAIL_CHARS)
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall; a stale pgid only yields ESRCH.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

/// Blocking executor; safe to share across worker threads.
#[derive(Debug)]
pub struct Executor {
    config: ExecutorConfig,
    scratch_root: PathBuf,
    counter: AtomicU64,
}

impl Executor {
    pub fn new(config: ExecutorConfig, scratch_root: impl Into<PathBuf>) -> Self {
        Executor { config, scratch_root: scratch_root.into(), counter: AtomicU64::new(0) }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    pub fn validate(&self, script: &str) -> ValidationReport {
        validate_environment(script, &self.config)
    }

    /// Allocates a fresh, never-before-used scratch directory named after `stem`.
    pub fn fresh_scratch(&self, stem: &str) -> io::Result<PathBuf> {
        fs::create_dir_all(&self.scratch_root)?;
        for attempt in 0u32.. {
            let name = if attempt == 0 { stem.to_string() } else { format!("{stem}.{attempt}") };
            let dir = self.scratch_root.join(name);
            match fs::create_dir(&dir) {
                Ok(()) => return Ok(dir),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e),
            }
        }
        unreachable!()
    }

    /// Runs `script` in a newly allocated scratch directory.
    pub fn execute(&self, script: &str, data_dir: &Path) -> Result<ExecutionOutcome, SandboxError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let scratch = self.fresh_scratch(&format!("exec-{n:06}"))?;
        self.execute_in(script, data_dir, &scratch)
    }

    /// Runs `script` in `scratch`, which must exist and be empty.
    pub fn execute_in(&self, script: &str, data_dir: &Path, scratch: &Path) -> Result<ExecutionOutcome, SandboxError> {
        let cfg = &self.config;
        let (program, fixed_args) = cfg.interpreter_cmd.split_first().ok_or(SandboxError::NoInterpreter)?;
        if fs::read_dir(scratch)?.next().is_some() {
            return Err(SandboxError::ScratchExists(scratch.to_path_buf()));
        }
        let scratch = scratch.canonicalize()?;
        let data_dir = data_dir.canonicalize().unwrap_or_else(|_| data_dir.to_path_buf());
        let script_path = scratch.join(format!("candidate.{}", cfg.extension()));
        fs::write(&script_path, script)?;
        let tmp = scratch.join("tmp");
        fs::create_dir(&tmp)?;
        let stdout = File::create(scratch.join(STDOUT_LOG))?;
        let stderr = File::create(scratch.join(STDERR_LOG))?;

        let mut cmd = Command::new(program);
        cmd.args(fixed_args)
            .arg(&script_path)
            .arg("--data-dir")
            .arg(&data_dir)
            .arg("--output-dir")
            .arg(&scratch)
            .current_dir(&scratch)
            .env_clear()
            .env("HOME", &scratch)
            .env("TMPDIR", &tmp)
            .stdin(Stdio::null())
            .stdout(Stdio::from(stdout))
            .stderr(Stdio::from(stderr))
            .process_group(0);
        for key in &cfg.env_passthrough {
            if let Some(v) = std::env::var_os(key) {
                cmd.env(key, v);
            }
        }

        let cap = Duration::from_secs_f64(cfg.kill_cap().max(0.0));
        let start = Instant::now();
        let mut child = cmd
            .spawn()
            .map_err(|source| SandboxError::SpawnFailure { cmd: program.clone(), source })?;
        let pid = child.id();
        let mut timed_out = false;
        let mut poll = Duration::from_millis(2);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if start.elapsed() >= cap {
                kill_group(pid);
                timed_out = true;
                break child.wait()?;
            }
            std::thread::sleep(poll.min(cap.saturating_sub(start.elapsed())).max(Duration::from_millis(1)));
            poll = (poll * 2).min(Duration::from_millis(50));
        };
        let elapsed = start.elapsed().as_secs_f64();
        // Reap any stragglers the script left behind.
        kill_group(pid);

        let mut tau_s = elapsed;
        if cfg.timing_resolution > 0.0 {
            tau_s = (tau_s / cfg.timing_resolution).ceil() * cfg.timing_resolution;
        }
        tau_s = tau_s.min(cfg.kill_cap()).max(0.0);

        // Host paths vary between runs; keep the tails location-independent.
        let scrub = |text: String| {
            text.replace(&*scratch.to_string_lossy(), "<output-dir>")
                .replace(&*data_dir.to_string_lossy(), "<data-dir>")
        };
        let stdout_tail = scrub(read_tail(&scratch.join(STDOUT_LOG)));
        let mut stderr_tail = scrub(read_tail(&scratch.join(STDERR_LOG)));
        let exit_code = status.code();

        let (status, metrics) = if timed_out {
            (ExecutionStatus::Timeout, None)
        } else if exit_code != Some(0) {
            (ExecutionStatus::RuntimeError, None)
        } else {
            match parse_metrics(&scratch) {
                Ok(m) => (ExecutionStatus::Success, Some(m)),
                Err(e) => {
                    stderr_tail = tail(&format!("{stderr_tail}\n[sandbox] {e}"), TAIL_CHARS);
                    (ExecutionStatus::MetricsMissing, None)
                }
            }
        };
        Ok(ExecutionOutcome { status, exit_code, tau_s, stdout_tail, stderr_tail, metrics })
    }
}
