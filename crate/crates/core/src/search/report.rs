//! Run summaries: report.md, topology.json, best_solution.<ext> and
//! trajectory.csv.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{SearchConfig, SearchError, JOURNAL_FILE};
use crate::eeg::ConstraintDescriptor;
use crate::knowledge::PriorDigest;
use crate::llm::TaskSpec;
use crate::reward::RewardBreakdown;
use crate::tree::{journal_replay, JournalRecord, LineageTrace, NodeId, NodeStatus, SolutionTree, Topology};

pub const RUN_META_FILE: &str = "run.json";
pub const REPORT_FILES: [&str; 3] = ["report.md", "topology.json", "trajectory.csv"];

/// What a run was configured with; written before the search starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub task: TaskSpec,
    pub search: SearchConfig,
    pub script_extension: String,
    pub backend: String,
    pub constraints: Option<ConstraintDescriptor>,
    pub priors: Option<PriorDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub best_node_id: Option<NodeId>,
    pub best_reward: Option<RewardBreakdown>,
    pub best_script: Option<String>,
    pub best_metric: Option<f64>,
    pub lineage: Option<LineageTrace>,
    /// Expansion jobs dispatched.
    pub iterations_used: usize,
    pub nodes_created: usize,
    /// FAILED nodes plus jobs that produced no node.
    pub failures_count: usize,
    pub stop_reason: String,
    /// Best EXECUTED reward after each node, in creation order.
    pub best_so_far: Vec<Option<f64>>,
    pub tree_topology: Topology,
}

impl RunReport {
    pub fn assemble(tree: &SolutionTree, iterations_used: usize, skipped_jobs: usize, stop_reason: String) -> Self {
        let best = tree.best_node().ok();
        RunReport {
            best_node_id: best.map(|n| n.id),
            best_reward: best.and_then(|n| n.reward),
            best_script: best.map(|n| n.script.clone()),
            best_metric: best.and_then(|n| n.outcome.as_ref()).and_then(|o| o.metrics.as_ref()).map(|m| m.primary_metric),
            lineage: best.and_then(|n| tree.lineage(n.id).ok()),
            iterations_used,
            nodes_created: tree.len(),
            failures_count: tree.iter().filter(|n| n.status == NodeStatus::Failed).count() + skipped_jobs,
            stop_reason,
            best_so_far: tree.best_so_far(),
            tree_topology: tree.topology(),
        }
    }

    /// True when some node executed successfully.
    pub fn has_success(&self) -> bool {
        self.best_node_id.is_some()
    }
}

/// Rebuilds the report of a finished (or interrupted) run from its workdir.
pub fn load_run(workdir: &Path) -> Result<(RunMeta, RunReport, SolutionTree), SearchError> {
    let meta_path = workdir.join(RUN_META_FILE);
    let meta_text = fs::read_to_string(&meta_path)?;
    let meta: RunMeta = serde_json::from_str(&meta_text)
        .map_err(|e| SearchError::InvalidConfig(format!("{}: {e}", meta_path.display())))?;
    let replay = journal_replay(&workdir.join(JOURNAL_FILE))?;
    let mut dispatched = 0;
    let mut skipped = 0;
    let mut stop = "interrupted".to_string();
    for r in &replay.records {
        match r {
            JournalRecord::Dispatch { .. } => dispatched += 1,
            JournalRecord::Release { produced: false, .. } => skipped += 1,
            JournalRecord::Note { message } => {
                if let Some(s) = message.strip_prefix("stopped: ") {
                    stop = s.to_string();
                }
            }
            _ => {}
        }
    }
    let report = RunReport::assemble(&replay.tree, dispatched, skipped, stop);
    Ok((meta, report, replay.tree))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn render_markdown(report: &RunReport, meta: &RunMeta) -> String {
    let mut md = String::new();
    let task = &meta.task;
    let _ = writeln!(md, "# Search report\n");
    let _ = writeln!(md, "## Task\n\n{}\n", task.goal.trim());
    let _ = writeln!(md, "- Evaluation: {}", task.evaluation_criteria.trim());
    let _ = writeln!(md, "- Data directory: `{}`", task.data_dir.display());
    let _ = writeln!(md, "- Backend: {}\n", meta.backend);

    let _ = writeln!(md, "## Outcome\n");
    let _ = writeln!(md, "- Stopped: {}", report.stop_reason);
    let _ = writeln!(md, "- Iterations used: {} of {}", report.iterations_used, meta.search.iteration_budget);
    let _ = writeln!(md, "- Nodes created: {}", report.nodes_created);
    let _ = writeln!(md, "- Failures: {}", report.failures_count);
    match (report.best_node_id, report.best_reward) {
        (Some(id), Some(r)) => {
            let _ = writeln!(md, "- Best node: {id}");
            let _ = writeln!(md, "- Best primary metric: {}", fmt_opt(report.best_metric));
            let _ = writeln!(
                md,
                "- Best reward: {:.4} (performance {:.4}, improvement {:.4}, novelty {:.4}, efficiency {:.4}, executability {:.0})\n",
                r.total, r.performance, r.improvement, r.novelty, r.efficiency, r.debug
            );
        }
        _ => {
            let _ = writeln!(md, "- No candidate executed successfully.\n");
        }
    }

    if let Some(c) = &meta.constraints {
        let _ = writeln!(md, "## Data constraints\n");
        let _ = writeln!(md, "- Sampling rate: {} Hz", c.sampling_rate_hz);
        let _ = writeln!(md, "- Channels ({}): {}", c.channel_count, c.channel_labels.join(", "));
        let _ = writeln!(md, "- Duration: {} s", c.duration_s);
        let _ = writeln!(
            md,
            "- Powerline ratio 50/60 Hz: {} / {}; EOG index {}; EMG ratio {}",
            c.powerline_ratio_50, c.powerline_ratio_60, c.eog_index, c.emg_ratio
        );
        for w in &c.warnings {
            let _ = writeln!(md, "- Warning: {w}");
        }
        md.push('\n');
    }
    if let Some(p) = &meta.priors {
        let _ = writeln!(md, "## Architectural priors\n\n{}\n", p.render_brief());
    }

    if let Some(script) = &report.best_script {
        let _ = writeln!(md, "## Best pipeline\n\n```{}\n{}\n```\n", meta.script_extension, script.trim_end());
    }

    if let Some(l) = &report.lineage {
        let _ = writeln!(md, "## Lineage\n");
        let _ = writeln!(md, "| step | node | kind | status | performance | reward |");
        let _ = writeln!(md, "|---:|---:|---|---|---:|---:|");
        for (step, id) in l.node_ids.iter().enumerate() {
            let node = report.tree_topology.nodes.iter().find(|n| n.id == *id);
            let (kind, status) = node.map_or(("-".to_string(), "-".to_string()), |n| {
                (format!("{:?}", n.kind), n.outcome.clone().unwrap_or_else(|| format!("{:?}", n.status)))
            });
            let _ = writeln!(
                md,
                "| {step} | {id} | {kind} | {status} | {} | {} |",
                fmt_opt(l.performance_along_path[step]),
                fmt_opt(l.rewards_along_path[step])
            );
        }
        md.push('\n');
    }
    let _ = writeln!(md, "Per-iteration best-so-far reward: `trajectory.csv`. Full tree: `topology.json`.");
    md
}

fn render_trajectory(report: &RunReport) -> String {
    let mut csv = String::from("iteration,node_id,best_so_far\n");
    for (i, (node, best)) in report.tree_topology.nodes.iter().zip(&report.best_so_far).enumerate() {
        let best = best.map_or_else(String::new, |b| format!("{b}"));
        let _ = writeln!(csv, "{},{},{}", i + 1, node.id, best);
    }
    csv
}

/// Writes the report files into `out_dir`; returns their paths.
pub fn emit_report(report: &RunReport, meta: &RunMeta, out_dir: &Path) -> Result<Vec<PathBuf>, SearchError> {
    fs::create_dir_all(out_dir).map_err(|source| SearchError::WriteFailed { path: out_dir.to_path_buf(), source })?;
    let mut files = vec![
        (out_dir.join("report.md"), render_markdown(report, meta)),
        (
            out_dir.join("topology.json"),
            serde_json::to_string_pretty(&report.tree_topology).expect("topology serializes"),
        ),
        (out_dir.join("trajectory.csv"), render_trajectory(report)),
    ];
    if let Some(script) = &report.best_script {
        files.push((out_dir.join(format!("best_solution.{}", meta.script_extension)), script.clone()));
    }
    let mut written = Vec::new();
    for (path, text) in files {
        fs::write(&path, text).map_err(|source| SearchError::WriteFailed { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardWeights;
    use crate::sandbox::{ExecutionOutcome, ExecutionStatus, MetricReport};
    use crate::tree::{NodeKind, SolutionNode};

    fn meta() -> RunMeta {
        RunMeta {
            task: TaskSpec {
                goal: "g".into(),
                evaluation_criteria: "e".into(),
                data_dir: PathBuf::from("/data"),
                extra_constraints: None,
            },
            search: SearchConfig::default(),
            script_extension: "sh".into(),
            backend: "mock".into(),
            constraints: None,
            priors: None,
        }
    }

    fn executed(id: u64, parent: Option<u64>, perf: f64) -> SolutionNode {
        let mut n = SolutionNode::drafted(NodeId(id), parent.map(NodeId), NodeKind::Root, "echo hi");
        n.status = NodeStatus::Executed;
        n.outcome = Some(ExecutionOutcome {
            status: ExecutionStatus::Success,
            exit_code: Some(0),
            tau_s: 0.1,
            stdout_tail: String::new(),
            stderr_tail: String::new(),
            metrics: Some(MetricReport {
                primary_metric: perf,
                metric_name: "m".into(),
                auxiliary: Default::default(),
                wall_seconds_reported: None,
            }),
        });
        n.reward = Some(RewardBreakdown::from_terms([perf, 0.0, 0.0, 0.0, 1.0], RewardWeights::PERFORMANCE_ONLY));
        n
    }

    #[test]
    fn single_node_report() {
        let mut tree = SolutionTree::new();
        tree.insert(executed(0, None, 0.6)).unwrap();
        let report = RunReport::assemble(&tree, 1, 0, "iteration budget exhausted".into());
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&report, &meta(), dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
        let rows = md.lines().filter(|l| l.starts_with("| ") && !l.starts_with("| step")).count();
        assert_eq!(rows, 1);
        assert_eq!(fs::read_to_string(dir.path().join("best_solution.sh")).unwrap(), "echo hi");
        let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(csv, "iteration,node_id,best_so_far\n1,0,0.6\n");
    }

    #[test]
    fn failure_only_report() {
        let mut tree = SolutionTree::new();
        let mut n = SolutionNode::drafted(NodeId(0), None, NodeKind::Root, "exit 1");
        n.status = NodeStatus::Failed;
        n.reward = Some(RewardBreakdown::from_terms([0.0; 5], RewardWeights::default()));
        tree.insert(n).unwrap();
        let report = RunReport::assemble(&tree, 1, 0, "x".into());
        assert!(!report.has_success());
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(emit_report(&report, &meta(), dir.path()).unwrap().len(), 3);
        assert!(fs::read_to_string(dir.path().join("report.md")).unwrap().contains("No candidate executed"));
    }
}
