use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use weave::eeg::probe;
use weave::knowledge::{load_catalog, select_candidates};
use weave::llm::TaskSpec;
use weave::search::{emit_report, load_run, run_with_config, RunConfig, RunReport};

#[derive(Parser)]
#[command(name = "weave", version, about = "Evolutionary search over EEG pipeline scripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search; exits 0 iff some candidate executed successfully.
    Run {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workdir: PathBuf,
        /// Playbook file for the mock backend; overrides the configured backend.
        #[arg(long)]
        mock: Option<PathBuf>,
    },
    /// Rebuild the report of a run from its journal.
    Report {
        #[arg(long)]
        workdir: PathBuf,
    },
    /// Print the constraint descriptor of a recordings directory.
    Probe {
        data_dir: PathBuf,
        #[arg(long, default_value_t = weave::eeg::probe::DEFAULT_SAMPLE_BUDGET)]
        sample_budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Model catalog tools.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// Check a catalog directory or file.
    Validate { path: PathBuf },
    /// Show the cards chosen for a task goal, one per category.
    Select {
        path: PathBuf,
        #[arg(long)]
        goal: String,
    },
}

fn summarize(report: &RunReport, workdir: &Path) {
    println!("stopped: {}", report.stop_reason);
    println!("iterations: {}  nodes: {}  failures: {}", report.iterations_used, report.nodes_created, report.failures_count);
    match (report.best_node_id, report.best_reward) {
        (Some(id), Some(r)) => {
            let metric = report.best_metric.map_or_else(|| "-".into(), |m| format!("{m:.4}"));
            println!("best node: {id}  primary_metric: {metric}  reward: {:.4}", r.total);
        }
        _ => println!("no candidate executed successfully"),
    }
    println!("report: {}", workdir.join("report.md").display());
}

fn success(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(task: &Path, config: &Path, workdir: &Path, mock: Option<&Path>) -> Result<ExitCode, String> {
    let task = TaskSpec::load(task).map_err(|e| e.to_string())?;
    let cfg = RunConfig::load(config).map_err(|e| e.to_string())?;
    match run_with_config(&task, &cfg, workdir, mock) {
        Ok(report) => {
            summarize(&report, workdir);
            Ok(success(report.has_success()))
        }
        Err(e) => {
            eprintln!("error: {e}");
            let ok = load_run(workdir).map(|(_, r, _)| r.has_success()).unwrap_or(false);
            Ok(success(ok))
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, String> {
    match cli.command {
        Command::Run { task, config, workdir, mock } => run(&task, &config, &workdir, mock.as_deref()),
        Command::Report { workdir } => {
            let (meta, report, _) = load_run(&workdir).map_err(|e| e.to_string())?;
            emit_report(&report, &meta, &workdir).map_err(|e| e.to_string())?;
            summarize(&report, &workdir);
            Ok(success(report.has_success()))
        }
        Command::Probe { data_dir, sample_budget, out } => {
            let cv = probe(&data_dir, sample_budget).map_err(|e| e.to_string())?;
            let json = cv.to_json(Some(&data_dir));
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| format!("{}: {e}", path.display()))?,
                None => println!("{json}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Catalog { command: CatalogCommand::Validate { path } } => {
            let catalog = load_catalog(&path).map_err(|e| e.to_string())?;
            println!(
                "catalog {} is valid: {} cards in {} categories ({})",
                catalog.version,
                catalog.cards.len(),
                catalog.taxonomy.len(),
                catalog.taxonomy.join(", ")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Catalog { command: CatalogCommand::Select { path, goal } } => {
            let catalog = load_catalog(&path).map_err(|e| e.to_string())?;
            for card in select_candidates(&goal, &catalog).map_err(|e| e.to_string())? {
                println!("{}\t{}", card.category, card.name);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
