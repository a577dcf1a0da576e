//! Executes a valid, a broken and a runaway candidate script.
//!
//! Run with `cargo run --example sandbox_run`.

use weave::fixtures::{broken_script, ridge_script, sleeper_script, write_ridge_task};
use weave::sandbox::{Executor, ExecutorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let task = write_ridge_task(dir.path(), 0.8)?;
    let config = ExecutorConfig {
        interpreter_cmd: vec!["sh".into()],
        allow_list: vec![],
        tau_max: 1.0,
        timing_resolution: 0.01,
        ..Default::default()
    };
    let executor = Executor::new(config, dir.path().join("scratch"));

    for (name, script) in [
        ("ridge h=0.55", ridge_script(0.55, false)),
        ("broken", broken_script(0)),
        ("sleeper", sleeper_script(30)),
        ("crash", "#!/bin/sh\necho 'no data loader' >&2\nexit 4\n".to_string()),
    ] {
        let report = executor.validate(&script);
        let outcome = if report.is_clean() {
            executor.execute(&script, &task.data_dir)?
        } else {
            weave::sandbox::ExecutionOutcome::rejected(&report, 0.0)
        };
        println!("{name}: {:?} after {:.2} s", outcome.status, outcome.tau_s);
        if let Some(m) = &outcome.metrics {
            println!("  {} = {:.4} {:?}", m.metric_name, m.primary_metric, m.auxiliary);
        }
        for line in outcome.stderr_tail.lines().take(3) {
            println!("  stderr: {line}");
        }
    }
    Ok(())
}
