//! Pre-execution checks: the interpreter's parse-only mode plus a static
//! scan of imported modules against the allow-list.

use std::collections::BTreeSet;
use std::io::Write;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ExecutorConfig, ScriptLanguage};

const PYTHON_STDLIB: &str = include_str!("python_stdlib.txt");
const SYNTAX_CHECK_TIMEOUT: Duration = Duration::from_secs(20);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FindingKind {
    Syntax,
    MissingDependency,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
    pub line: Option<usize>,
    pub module: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    /// Human-readable listing, fed back to the generator on failure.
    pub fn render(&self) -> String {
        self.findings
            .iter()
            .map(|f| match (f.kind, f.line) {
                (FindingKind::Syntax, Some(l)) => format!("SYNTAX (line {l}): {}", f.message),
                (FindingKind::Syntax, None) => format!("SYNTAX: {}", f.message),
                (FindingKind::MissingDependency, _) => format!("MISSING_DEPENDENCY: {}", f.message),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

fn python_stdlib() -> &'static BTreeSet<&'static str> {
    static SET: OnceLock<BTreeSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| PYTHON_STDLIB.lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

/// Top-level module names a script depends on, in first-seen order.
///
/// Python `import`/`from` statements are recognised for Python scripts; a
/// `# requires: a, b` directive is honoured in any language.
pub fn declared_modules(script: &str, language: ScriptLanguage) -> Vec<String> {
    static IMPORT: OnceLock<Regex> = OnceLock::new();
    static FROM: OnceLock<Regex> = OnceLock::new();
    static REQUIRES: OnceLock<Regex> = OnceLock::new();
    let import = IMPORT.get_or_init(|| Regex::new(r"^\s*import\s+(.+?)\s*(#.*)?$").unwrap());
    let from = FROM.get_or_init(|| Regex::new(r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\b").unwrap());
    let requires = REQUIRES.get_or_init(|| Regex::new(r"^\s*(?:#|//|--)\s*requires:\s*(.+)$").unwrap());

    let mut out: Vec<String> = Vec::new();
    let mut push = |name: &str| {
        let top = name.trim().split('.').next().unwrap_or("").trim();
        if !top.is_empty() && !out.iter().any(|m| m == top) {
            out.push(top.to_string());
        }
    };
    for line in script.lines() {
        if let Some(c) = requires.captures(line) {
            c[1].split(',').for_each(&mut push);
            continue;
        }
        if language != ScriptLanguage::Python {
            continue;
        }
        if let Some(c) = from.captures(line) {
            push(&c[1]);
        } else if let Some(c) = import.captures(line) {
            for part in c[1].split(',') {
                let name = part.split_whitespace().next().unwrap_or("");
                if name.chars().all(|ch| ch.is_alphanumeric() || ch == '_' || ch == '.') {
                    push(name);
                }
            }
        }
    }
    out
}

fn line_number(text: &str) -> Option<usize> {
    static LINE: OnceLock<Regex> = OnceLock::new();
    let re = LINE.get_or_init(|| Regex::new(r"(?i)line (\d+)|:\s*(\d+):").unwrap());
    re.captures_iter(text)
        .filter_map(|c| c.get(1).or_else(|| c.get(2)).and_then(|m| m.as_str().parse().ok()))
        .last()
}

fn default_check_cmd(cfg: &ExecutorConfig) -> Option<Vec<String>> {
    let interp = cfg.interpreter_cmd.first()?;
    match cfg.language() {
        ScriptLanguage::Python => Some(vec![
            interp.clone(),
            "-c".into(),
            "import ast,sys; ast.parse(open(sys.argv[1], encoding='utf-8').read(), sys.argv[1])".into(),
            "{script}".into(),
        ]),
        ScriptLanguage::Shell => Some(vec![interp.clone(), "-n".into(), "{script}".into()]),
        ScriptLanguage::Other => None,
    }
}

fn run_syntax_check(script: &str, cfg: &ExecutorConfig) -> Option<Finding> {
    let cmd = cfg.syntax_check_cmd.clone().or_else(|| default_check_cmd(cfg))?;
    let mut file = match tempfile::Builder::new().prefix("candidate").suffix(&format!(".{}", cfg.extension())).tempfile()
    {
        Ok(f) => f,
        Err(e) => return Some(syntax(format!("could not stage script for checking: {e}"), None)),
    };
    if let Err(e) = file.write_all(script.as_bytes()).and_then(|_| file.flush()) {
        return Some(syntax(format!("could not stage script for checking: {e}"), None));
    }
    let path = file.path().to_string_lossy().into_owned();
    let argv: Vec<String> = cmd.iter().map(|a| a.replace("{script}", &path)).collect();
    let mut child = match Command::new(&argv[0])
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
    {
        Ok(c) => c,
        Err(e) => return Some(syntax(format!("syntax checker `{}` failed to start: {e}", argv[0]), None)),
    };
    let start = Instant::now();
    loop {
        match child.try_wait() {
            Ok(Some(_)) => break,
            Ok(None) if start.elapsed() > SYNTAX_CHECK_TIMEOUT => {
                let _ = child.kill();
                let _ = child.wait();
                return Some(syntax("syntax check timed out".into(), None));
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Some(syntax(format!("syntax check failed: {e}"), None)),
        }
    }
    let output = child.wait_with_output().ok()?;
    if output.status.success() {
        return None;
    }
    let mut msg = String::from_utf8_lossy(&output.stderr).into_owned();
    msg.push_str(&String::from_utf8_lossy(&output.stdout));
    let msg = msg.replace(&path, "candidate").trim().to_string();
    let line = line_number(&msg);
    Some(syntax(if msg.is_empty() { "syntax check failed".into() } else { msg }, line))
}

fn syntax(message: String, line: Option<usize>) -> Finding {
    Finding { kind: FindingKind::Syntax, message, line, module: None }
}

/// Checks a script without running its body.
pub fn validate_environment(script: &str, cfg: &ExecutorConfig) -> ValidationReport {
    let mut findings = Vec::new();
    if let Some(f) = run_syntax_check(script, cfg) {
        findings.push(f);
    }
    let lang = cfg.language();
    for module in declared_modules(script, lang) {
        let builtin = lang == ScriptLanguage::Python && python_stdlib().contains(module.as_str());
        if !builtin && !cfg.allow_list.iter().any(|a| a == &module) {
            findings.push(Finding {
                kind: FindingKind::MissingDependency,
                message: format!("module `{module}` is not in the dependency allow-list"),
                line: None,
                module: Some(module),
            });
        }
    }
    ValidationReport { findings }
}
