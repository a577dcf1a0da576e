//! Renders the root, refine and debug prompts for a synthetic task.
//!
//! Run with `cargo run --example prompt_rendering -- [root|refine|debug]`.

use weave::eeg::probe;
use weave::fixtures::{broken_script, ridge_script, write_ridge_task};
use weave::knowledge::{select_candidates, summarize_priors, Catalog};
use weave::llm::{build_prompt, PromptContext};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let which = std::env::args().nth(1).unwrap_or_else(|| "root".into());
    let dir = tempfile::tempdir()?;
    let task = write_ridge_task(dir.path(), 0.8)?;

    let ctx = match which.as_str() {
        "refine" => PromptContext::refine(
            task,
            ridge_script(0.55, false),
            "Execution succeeded. primary_metric (ridge_score): 0.75\nh=0.550000 score=0.750000",
        ),
        "debug" => PromptContext::debug(task, broken_script(0), "candidate: 5: Syntax error: end of file unexpected (expecting \"fi\")"),
        _ => {
            let constraints = probe(&task.data_dir, 5)?.to_json(Some(&task.data_dir));
            let catalog = Catalog::bundled();
            let priors = summarize_priors(&select_candidates(&task.goal, &catalog)?, &catalog.version, None)?;
            PromptContext::draft_root(task, Some(constraints), Some(priors))
        }
    };
    let request = build_prompt(&ctx)?;
    println!("role {:?}, temperature {}\n", request.role, request.temperature);
    for m in &request.messages {
        println!("=== {} ===\n{}\n", m.role, m.content);
    }
    Ok(())
}
