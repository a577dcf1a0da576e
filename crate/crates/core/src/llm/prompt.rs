//! Role-specific prompt templates.
//!
//! Every code-producing prompt embeds [`SCRIPT_CONTRACT`] verbatim. Variable
//! sections pass through the numeric-run redactor, and the whole document is
//! kept under a character budget by shrinking feedback first, then priors,
//! and never the contract.

use super::privacy::redact_numeric_runs;
use super::{ChatRequest, LlmError, Message, PromptContext, Role};
use crate::sandbox::tail;

/// Prompt template revision, recorded in call logs.
pub const TEMPLATE_VERSION: &str = "weave-prompts/1";

/// Token budget estimate (chars / 4).
pub const PROMPT_TOKEN_BUDGET: usize = 32_000;
pub const PROMPT_CHAR_BUDGET: usize = PROMPT_TOKEN_BUDGET * 4;

/// Characters of error output shown to the DEBUG role.
pub const DEBUG_FEEDBACK_CHARS: usize = 4000;

/// Archive rationales shown to the novelty judge.
pub const JUDGE_ARCHIVE_LIMIT: usize = 5;

pub const SCRIPT_CONTRACT: &str = "\
The script is invoked as:
  <interpreter> <script> --data-dir <DATA_DIR> --output-dir <OUTPUT_DIR>
Requirements:
- A single self-contained file, organised as load -> preprocess -> model stages.
- Read recordings only from --data-dir and treat that directory as read-only.
- Write every artifact under --output-dir, which is also the working directory.
- On success write <OUTPUT_DIR>/metrics.json holding a JSON object with the keys
  metric_name (string), primary_metric (number), and optionally
  normalization ({\"min\": number, \"max\": number}), auxiliary (object of numbers)
  and wall_seconds (number). Without normalization, primary_metric must lie in [0, 1].
- Exit with status 0 on success and non-zero on failure.
- Use only the standard library and the allowed packages. Never install packages.
- Finish well inside the time budget; slower scripts score lower.
Reply with exactly one fenced code block containing the complete script, followed by a short rationale.";

const SYSTEM_CODE: &str = "You are an expert engineer building EEG analysis pipelines. \
You write complete, runnable scripts and never elide code.";
const SYSTEM_SUMMARIZE: &str = "You condense neural-network architecture descriptions into short, factual design notes.";
const SYSTEM_JUDGE: &str = "You rate how different a candidate pipeline is from earlier solutions.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Fixed,
    Contract,
    Constraints,
    Priors,
    Script,
    Feedback,
}

struct Section {
    part: Part,
    title: &'static str,
    body: String,
}

fn section(part: Part, title: &'static str, body: impl Into<String>) -> Section {
    Section { part, title, body: body.into() }
}

fn fenced(body: &str) -> String {
    format!("```\n{}\n```", body.trim_end())
}

/// Checks the per-role requirements on a context.
pub fn check_context(ctx: &PromptContext) -> Result<(), LlmError> {
    let bad = |m: &str| Err(LlmError::ContextInvalid(m.to_string()));
    if ctx.task.goal.trim().is_empty() || ctx.task.evaluation_criteria.trim().is_empty() {
        return bad("task goal and evaluation criteria must be non-empty");
    }
    match ctx.role {
        Role::DraftRoot if !ctx.unconditioned && (ctx.constraints.is_none() || ctx.priors.is_none()) => {
            bad("DRAFT_ROOT requires constraints and priors")
        }
        Role::Refine | Role::Debug if ctx.parent_script.is_none() => bad("REFINE and DEBUG require the parent script"),
        Role::Debug if ctx.parent_feedback.as_deref().is_none_or(|f| f.trim().is_empty()) => {
            bad("DEBUG requires the captured error output")
        }
        Role::Summarize | Role::NoveltyJudge if ctx.subject.as_deref().is_none_or(|s| s.trim().is_empty()) => {
            bad("SUMMARIZE and NOVELTY_JUDGE require a subject")
        }
        _ => Ok(()),
    }
}

fn sections(ctx: &PromptContext) -> Vec<Section> {
    let mut out = Vec::new();
    let task = &ctx.task;
    let code_role = ctx.role.is_code_role();
    if code_role {
        out.push(section(Part::Fixed, "Task", redact_numeric_runs(&task.goal)));
        out.push(section(Part::Fixed, "Evaluation", redact_numeric_runs(&task.evaluation_criteria)));
        if let Some(extra) = &task.extra_constraints {
            out.push(section(Part::Fixed, "Additional requirements", redact_numeric_runs(extra)));
        }
        out.push(section(Part::Contract, "Script contract", SCRIPT_CONTRACT));
        if let Some(env) = &ctx.environment {
            out.push(section(Part::Fixed, "Execution environment", redact_numeric_runs(env)));
        }
        let conditioned = !(ctx.role == Role::DraftRoot && ctx.unconditioned);
        if conditioned {
            if let Some(c) = &ctx.constraints {
                out.push(section(Part::Constraints, "Data constraints", fenced(&redact_numeric_runs(c))));
            }
            if let Some(p) = &ctx.priors {
                out.push(section(Part::Priors, "Architectural priors", redact_numeric_runs(&p.render())));
            }
        }
    }
    match ctx.role {
        Role::DraftRoot => {
            if let Some(note) = &ctx.note {
                out.push(section(Part::Fixed, "Note", redact_numeric_runs(note)));
            }
            out.push(section(
                Part::Fixed,
                "Instructions",
                "Write a first complete pipeline for this task. Choose preprocessing and a model family \
                 that fit the data constraints and priors above, keep it simple enough to run reliably, \
                 and report the evaluation metric through metrics.json.",
            ));
        }
        Role::Refine => {
            out.push(section(Part::Script, "Parent script", fenced(&redact_numeric_runs(ctx.parent_script.as_deref().unwrap_or("")))));
            if let Some(fb) = &ctx.parent_feedback {
                out.push(section(Part::Feedback, "Parent results", redact_numeric_runs(fb)));
            }
            out.push(section(
                Part::Fixed,
                "Instructions",
                "Diagnose what limits the parent's performance, then rewrite the full script with one \
                 focused improvement. Keep everything that already works and keep the script contract.",
            ));
        }
        Role::Debug => {
            let fb = tail(ctx.parent_feedback.as_deref().unwrap_or(""), DEBUG_FEEDBACK_CHARS);
            out.push(section(Part::Script, "Failing script", fenced(&redact_numeric_runs(ctx.parent_script.as_deref().unwrap_or("")))));
            out.push(section(Part::Feedback, "Error output", redact_numeric_runs(&fb)));
            out.push(section(
                Part::Fixed,
                "Instructions",
                "Find the cause of the failure above and return the full corrected script. Change only \
                 what the fix needs and keep the script contract.",
            ));
        }
        Role::Summarize => {
            out.push(section(Part::Fixed, "Task", redact_numeric_runs(&task.goal)));
            out.push(section(Part::Feedback, "Architecture", redact_numeric_runs(ctx.subject.as_deref().unwrap_or(""))));
            out.push(section(
                Part::Fixed,
                "Instructions",
                "Summarise this architecture in at most 120 words: its input assumptions, core layers \
                 and when it suits the task. Plain prose, no code.",
            ));
        }
        Role::NoveltyJudge => {
            out.push(section(Part::Script, "Candidate", fenced(&redact_numeric_runs(ctx.subject.as_deref().unwrap_or("")))));
            let recent: Vec<String> = ctx
                .archive_rationales
                .iter()
                .rev()
                .take(JUDGE_ARCHIVE_LIMIT)
                .rev()
                .map(|r| format!("- {}", redact_numeric_runs(r.trim())))
                .collect();
            let body = if recent.is_empty() { "(none)".to_string() } else { recent.join("\n") };
            out.push(section(Part::Feedback, "Earlier solutions", body));
            out.push(section(
                Part::Fixed,
                "Instructions",
                "Rate how novel the candidate is relative to the earlier solutions. Reply with a single \
                 decimal number in [0, 1] and nothing else; 0 means a duplicate, 1 means entirely new.",
            ));
        }
    }
    out
}

fn render(sections: &[Section]) -> String {
    sections
        .iter()
        .filter(|s| !s.body.is_empty())
        .map(|s| format!("## {}\n{}", s.title, s.body.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn keep_tail(body: &str, chars: usize) -> String {
    if body.chars().count() <= chars {
        return body.to_string();
    }
    if chars < 40 {
        return String::new();
    }
    format!("[... truncated]\n{}", tail(body, chars - 16))
}

/// Shrinks sections until the rendered text fits `budget` characters.
fn fit(mut secs: Vec<Section>, system_len: usize, budget: usize, ctx: &PromptContext) -> Vec<Section> {
    let over = |s: &[Section]| (render(s).chars().count() + system_len).saturating_sub(budget);
    if over(&secs) == 0 {
        return secs;
    }
    // Feedback first, keeping its most recent part.
    for idx in 0..secs.len() {
        if secs[idx].part != Part::Feedback {
            continue;
        }
        let o = over(&secs);
        if o == 0 {
            return secs;
        }
        let len = secs[idx].body.chars().count();
        secs[idx].body = keep_tail(&secs[idx].body, len.saturating_sub(o + 32));
    }
    // Then priors: names only, then nothing.
    if over(&secs) > 0 {
        if let (Some(p), Some(s)) = (&ctx.priors, secs.iter_mut().find(|s| s.part == Part::Priors)) {
            s.body = redact_numeric_runs(&p.render_brief());
        }
    }
    if over(&secs) > 0 {
        secs.retain(|s| s.part != Part::Priors);
    }
    // Then the constraint block and the parent script; the contract stays.
    for part in [Part::Constraints, Part::Script, Part::Fixed] {
        for idx in 0..secs.len() {
            if secs[idx].part != part {
                continue;
            }
            let o = over(&secs);
            if o == 0 {
                return secs;
            }
            let len = secs[idx].body.chars().count();
            secs[idx].body = keep_tail(&secs[idx].body, len.saturating_sub(o + 32));
        }
    }
    secs
}

/// Builds the message list for a context under the default budget.
pub fn build_prompt(ctx: &PromptContext) -> Result<ChatRequest, LlmError> {
    build_prompt_with_budget(ctx, PROMPT_CHAR_BUDGET)
}

pub fn build_prompt_with_budget(ctx: &PromptContext, budget_chars: usize) -> Result<ChatRequest, LlmError> {
    check_context(ctx)?;
    let system = match ctx.role {
        Role::DraftRoot | Role::Refine | Role::Debug => SYSTEM_CODE,
        Role::Summarize => SYSTEM_SUMMARIZE,
        Role::NoveltyJudge => SYSTEM_JUDGE,
    };
    let secs = fit(sections(ctx), system.len(), budget_chars, ctx);
    Ok(ChatRequest {
        role: ctx.role,
        temperature: ctx.role.default_temperature(),
        messages: vec![Message::system(system), Message::user(render(&secs))],
    })
}
