//! A complete search against the ridge-peak task with a scripted backend.
//!
//! Run with `cargo run --example mock_search -- [seed] [budget]`.

use weave::fixtures::{write_ridge_workspace, RidgeScenario};
use weave::llm::TaskSpec;
use weave::search::{run_with_config, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let budget: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);

    let dir = tempfile::tempdir()?;
    let ws = write_ridge_workspace(dir.path(), &RidgeScenario::default(), budget, seed)?;
    let task = TaskSpec::load(&ws.task)?;
    let cfg = RunConfig::load(&ws.run)?;
    let workdir = dir.path().join("run");
    let report = run_with_config(&task, &cfg, &workdir, None)?;

    println!("stopped: {}", report.stop_reason);
    println!("nodes: {}  iterations: {}", report.nodes_created, report.iterations_used);
    if let (Some(id), Some(metric), Some(lineage)) = (report.best_node_id, report.best_metric, &report.lineage) {
        println!("best node {id}: primary_metric {metric:.4}");
        let perf: Vec<String> =
            lineage.performance_along_path.iter().map(|p| p.map_or("-".into(), |v| format!("{v:.4}"))).collect();
        println!("lineage performance: {}", perf.join(" -> "));
    }
    println!("\n{}", std::fs::read_to_string(workdir.join("report.md"))?);
    Ok(())
}
