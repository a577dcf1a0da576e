//! Runs a short search, then rebuilds its tree from the journal alone.
//!
//! Run with `cargo run --example journal_replay`.

use weave::fixtures::{write_ridge_workspace, RidgeScenario, RootBehaviour};
use weave::llm::TaskSpec;
use weave::search::{load_run, run_with_config, RunConfig, JOURNAL_FILE};
use weave::tree::{journal_replay, peak_in_flight, JournalRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let scenario = RidgeScenario { root: RootBehaviour::Broken, ..Default::default() };
    let ws = write_ridge_workspace(dir.path(), &scenario, 9, 2)?;
    let workdir = dir.path().join("run");
    let live = run_with_config(&TaskSpec::load(&ws.task)?, &RunConfig::load(&ws.run)?, &workdir, None)?;

    let replay = journal_replay(&workdir.join(JOURNAL_FILE))?;
    for record in &replay.records {
        match record {
            JournalRecord::Node { node } => println!(
                "node     {:>2} <- {:<4} {:?} {:?} total {}",
                node.id,
                node.parent_id.map_or("-".into(), |p| p.to_string()),
                node.kind,
                node.status,
                node.total().map_or("-".into(), |t| format!("{t:.4}"))
            ),
            JournalRecord::Dispatch { job, parent, action } => {
                println!("dispatch {job:>2} {action} of {}", parent.map_or("-".into(), |p| p.to_string()))
            }
            JournalRecord::Release { job, produced, .. } => println!("release  {job:>2} produced={produced}"),
            JournalRecord::Note { message } => println!("note     {message}"),
        }
    }
    println!("\npeak jobs in flight: {}", peak_in_flight(&replay.records));

    let (_, rebuilt, _) = load_run(&workdir)?;
    println!("replayed report matches the live one: {}", rebuilt == live);
    Ok(())
}
