//! Acceptance suite: one PASS/FAIL line per criterion, each held to its
//! tolerance and time limit. Exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{
    check_tree_history, children_map, dft_power, gamma_oracle, logged_prompts, longest_literal_run, oracle_fraction,
    random_edf, random_reward_case, random_signal, relative_error, stage, tree_history,
};
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use weave::eeg::probe::parse_edf_header;
use weave::eeg::{estimate_band_ratio, estimate_powerline};
use weave::fixtures::{
    constant_playbook, null_interpreter_cmd, sleeper_script, write_canned_metrics, RidgeScenario, RootBehaviour,
};
use weave::reward::{compose_reward, efficiency_term, RewardWeights};
use weave::sandbox::{ExecutionStatus, Executor, ExecutorConfig};
use weave::search::{debug_streak, load_run, run_with_config, RunReport, JOURNAL_FILE};
use weave::tree::{journal_replay, peak_in_flight, JournalRecord, NodeId, NodeKind, NodeStatus};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- criteria

fn gamma_exactness() -> Outcome {
    for tau_max in [2.0, 10.0, 600.0, 3600.0, 0.37] {
        let at = |tau: f64| efficiency_term(tau, tau_max).map_err(err);
        ensure!(at(0.0)? == 1.0, "Γ(0) != 1 for τmax {tau_max}");
        ensure!(at(tau_max)?.abs() <= 1e-12, "Γ(τmax) != 0 for τmax {tau_max}");
        ensure!((at(tau_max / 4.0)? - 0.5).abs() <= 1e-12, "Γ(τmax/4) != 0.5 for τmax {tau_max}");
        ensure!(at(2.0 * tau_max)?.abs() <= 1e-12, "Γ(2τmax) != 0 for τmax {tau_max}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..1000 {
        let tau_max = rng.random_range(0.1..1000.0);
        let (a, b) = (rng.random_range(0.0..2.5 * tau_max), rng.random_range(0.0..2.5 * tau_max));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (g_lo, g_hi) = (efficiency_term(lo, tau_max).map_err(err)?, efficiency_term(hi, tau_max).map_err(err)?);
        ensure!(g_lo >= g_hi, "Γ increased between τ={lo} and τ={hi}");
        ensure!((g_lo - gamma_oracle(lo, tau_max)).abs() <= 1e-12, "Γ({lo}) disagrees with the oracle");
    }
    Ok("4 anchors x 5 budgets, 1000 ordered pairs".into())
}

fn reward_composition() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        random_reward_case(&mut rng).check()?;
    }
    Ok("1000 cases to 1e-12, 5 finite-difference slopes each".into())
}

fn spectral_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let sig = random_signal(seed);
        let fs = sig.fs;
        let power = dft_power(&sig.samples, fs);
        let top = fs / 2.0 - 1.0;
        let pairs = [
            ("powerline 50", estimate_powerline(&sig.samples, fs, 50.0), oracle_fraction(&power, 49.0, 51.0, 1.0, top)),
            ("powerline 60", estimate_powerline(&sig.samples, fs, 60.0), oracle_fraction(&power, 59.0, 61.0, 1.0, top)),
            ("eog", estimate_band_ratio(&sig.samples, fs, 0.5, 4.0), oracle_fraction(&power, 0.5, 4.0, 0.5, top)),
            ("alpha", estimate_band_ratio(&sig.samples, fs, 8.0, 13.0), oracle_fraction(&power, 8.0, 13.0, 0.5, top)),
            ("emg", estimate_band_ratio(&sig.samples, fs, 30.0, fs / 2.0), oracle_fraction(&power, 30.0, fs / 2.0, 0.5, top)),
        ];
        for (name, est, oracle) in pairs {
            let e = relative_error(est.map_err(err)?, oracle);
            ensure!(e < 0.05, "signal {seed} {name}: relative error {e:.4}");
            worst = worst.max(e);
        }
    }
    let fs = 200.0;
    let sine: Vec<f64> = (0..2000).map(|i| (2.0 * PI * 50.0 * i as f64 / fs).sin()).collect();
    let line = estimate_powerline(&sine, fs, 50.0).map_err(err)?;
    ensure!(line > 0.8, "50 Hz sine ratio {line}");
    let normal = Normal::new(0.0, 1.0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let noise: Vec<f64> = (0..2000).map(|_| normal.sample(&mut rng)).collect();
    let floor = estimate_powerline(&noise, fs, 50.0).map_err(err)?;
    ensure!(floor < 0.1, "white noise ratio {floor}");
    Ok(format!("50 signals x 5 ratios, worst relative error {worst:.4}; sine {line:.3}, noise {floor:.3}"))
}

fn edf_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    for seed in 0..100 {
        let path = dir.path().join(format!("{seed}.edf"));
        let truth = random_edf(&path, 4000 + seed);
        let a = parse_edf_header(&path).map_err(|e| format!("file {seed}: {e}"))?;
        ensure!(a.channel_count == truth.channels, "file {seed}: {} channels, want {}", a.channel_count, truth.channels);
        ensure!(a.sampling_rate == truth.rates, "file {seed}: rates {:?}, want {:?}", a.sampling_rate, truth.rates);
        ensure!(a.duration == truth.duration, "file {seed}: duration {}, want {}", a.duration, truth.duration);
        ensure!(a.channel_labels == truth.labels, "file {seed}: labels {:?}, want {:?}", a.channel_labels, truth.labels);
    }
    Ok("100 files".into())
}

fn tree_properties() -> Outcome {
    let config = Config { cases: 200, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner
        .run(&tree_history(), |(root_executed, root_total, ops)| {
            check_tree_history(root_executed, root_total, &ops).map_err(TestCaseError::fail)
        })
        .map_err(err)?;
    Ok("200 randomized histories".into())
}

fn journal_of(workdir: &Path) -> Result<Vec<JournalRecord>, String> {
    Ok(journal_replay(&workdir.join(JOURNAL_FILE)).map_err(err)?.records)
}

fn ridge_run() -> Outcome {
    const SEED: u64 = 1;
    let runs: Vec<(RunReport, Vec<u8>)> = (0..2)
        .map(|_| {
            let st = stage(&RidgeScenario::default(), 20, SEED);
            let mut run = st.run.clone();
            run.search.parallelism = 3;
            let report = run_with_config(&st.task, &run, &st.workdir(), None).map_err(err)?;
            let journal = fs::read(st.workdir().join(JOURNAL_FILE)).map_err(err)?;
            Ok((report, journal))
        })
        .collect::<Result<_, String>>()?;
    let (report, journal) = &runs[0];
    let best = report.best_metric.ok_or("no successful node")?;
    ensure!(best >= 0.95, "best primary_metric {best:.4} < 0.95");
    let lineage = report.lineage.as_ref().ok_or("no lineage")?;
    let perf: Vec<f64> = lineage.performance_along_path.iter().map(|p| p.unwrap_or(f64::NAN)).collect();
    ensure!(perf.windows(2).all(|w| w[1] > w[0]), "lineage performance not strictly increasing: {perf:?}");
    ensure!(report.iterations_used <= 20, "{} iterations used", report.iterations_used);
    ensure!(*journal == runs[1].1, "two runs with seed {SEED} wrote different journals");
    ensure!(report == &runs[1].0, "two runs with seed {SEED} produced different reports");
    let path: Vec<String> = perf.iter().map(|p| format!("{p:.4}")).collect();
    Ok(format!("best {best:.4}, lineage {}, identical journals", path.join(" < ")))
}

fn debug_routing() -> Outcome {
    // A broken root whose repair succeeds.
    let st = stage(&RidgeScenario { root: RootBehaviour::Broken, ..Default::default() }, 10, 0);
    run_with_config(&st.task, &st.run, &st.workdir(), None).map_err(err)?;
    let records = journal_of(&st.workdir())?;
    let (_, _, tree) = load_run(&st.workdir()).map_err(err)?;
    let root = tree.get(NodeId(0)).ok_or("no root")?;
    ensure!(root.status == NodeStatus::Failed, "root did not fail");
    let first_success = tree.iter().find(|n| n.status == NodeStatus::Executed).ok_or("no successful node")?;
    let dispatches = records
        .iter()
        .filter(|r| matches!(r, JournalRecord::Dispatch { .. }))
        .position(|r| matches!(r, JournalRecord::Dispatch { job, .. } if *job == first_success.id))
        .ok_or("success was never dispatched")?
        + 1;
    ensure!(dispatches <= 2, "first success came at iteration {dispatches}");
    ensure!(
        first_success.kind == NodeKind::DebugChild && first_success.parent_id == Some(root.id),
        "first success is not a repair of the root"
    );

    // Repairs that never work.
    let st = stage(&RidgeScenario { root: RootBehaviour::Broken, debug_repairs: false, ..Default::default() }, 40, 0);
    let report = run_with_config(&st.task, &st.run, &st.workdir(), None).map_err(err)?;
    ensure!(!report.has_success(), "an always-broken run succeeded");
    let (_, _, tree) = load_run(&st.workdir()).map_err(err)?;
    let cap = st.run.search.debug_retry_cap;
    ensure!(cap == 3, "fixture debug cap is {cap}");
    let mut capped = 0;
    for n in tree.iter() {
        let streak = debug_streak(&tree, n.id);
        ensure!(streak <= cap, "node {} sits {streak} repairs deep", n.id);
        if streak == cap {
            capped += 1;
            ensure!(tree.children(n.id).is_empty(), "node {} was expanded past the cap", n.id);
        }
    }
    ensure!(capped > 0, "no chain reached the cap");
    ensure!(st.workdir().join("report.md").is_file(), "no report.md");
    Ok(format!(
        "repair succeeded at iteration {dispatches}; broken chains stopped at {cap} ({capped} capped, {} nodes), report written",
        tree.len()
    ))
}

fn budget_and_parallelism() -> Outcome {
    let st = stage(&RidgeScenario::default(), 200, 0);
    write_canned_metrics(&st.task.data_dir, 0.6).map_err(err)?;
    let playbook = st.dir.path().join("constant.json");
    fs::write(&playbook, constant_playbook(0.5).to_json()).map_err(err)?;
    let mut run = st.run.clone();
    run.interpreter_cmd = null_interpreter_cmd();
    run.search.iteration_budget = 200;
    run.search.parallelism = 3;
    run.search.patience = 1000;
    let report = run_with_config(&st.task, &run, &st.workdir(), Some(&playbook)).map_err(err)?;
    let records = journal_of(&st.workdir())?;
    let nodes = records.iter().filter(|r| matches!(r, JournalRecord::Node { .. })).count();
    let dispatched = records.iter().filter(|r| matches!(r, JournalRecord::Dispatch { .. })).count();
    let peak = peak_in_flight(&records);
    ensure!(nodes <= 200, "{nodes} nodes journaled");
    ensure!(dispatched <= 200, "{dispatched} jobs dispatched");
    ensure!(peak <= 3, "{peak} jobs in flight at once");
    ensure!(report.has_success(), "the null interpreter produced no success");
    Ok(format!("{nodes} nodes, {dispatched} dispatches, peak in flight {peak}"))
}

fn timeout_enforcement() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let tau_max = 2.0;
    let ex = Executor::new(
        ExecutorConfig { interpreter_cmd: vec!["sh".into()], allow_list: vec![], tau_max, ..Default::default() },
        dir.path().join("scratch"),
    );
    let start = Instant::now();
    let out = ex.execute(&sleeper_script(60), dir.path()).map_err(err)?;
    let wall = start.elapsed().as_secs_f64();
    ensure!(out.status == ExecutionStatus::Timeout, "status {:?}", out.status);
    ensure!(wall <= 2.0 * tau_max + 5.0, "killed after {wall:.2} s");
    let r = compose_reward(out.metrics.as_ref(), Some(0.5), &out, 0.5, &RewardWeights::default(), tau_max).map_err(err)?;
    ensure!(r.efficiency == 0.0, "Γ = {}", r.efficiency);
    ensure!(r.debug == 0.0, "Φ = {}", r.debug);
    Ok(format!("killed after {wall:.2} s (limit {:.0} s), Γ = 0, Φ = 0", 2.0 * tau_max + 5.0))
}

fn privacy_scan() -> Outcome {
    let st = stage(&RidgeScenario { leak_samples: true, ..Default::default() }, 20, 1);
    run_with_config(&st.task, &st.run, &st.workdir(), None).map_err(err)?;
    // The scripts really did dump raw recording bytes.
    let mut leaked = 0;
    for entry in fs::read_dir(st.workdir().join("scratch")).map_err(err)? {
        let log = entry.map_err(err)?.path().join("stdout.log");
        if let Ok(text) = fs::read_to_string(log) {
            leaked = leaked.max(longest_literal_run(&text));
        }
    }
    ensure!(leaked > 8, "fixture scripts did not emit raw sample runs ({leaked})");
    let prompts = logged_prompts(&st.workdir());
    ensure!(prompts.len() > 1, "only {} prompts logged", prompts.len());
    let mut worst = 0;
    for (path, text) in &prompts {
        let run = longest_literal_run(text);
        ensure!(run <= 8, "{} holds {run} consecutive numeric literals", path.display());
        worst = worst.max(run);
    }
    Ok(format!("{} prompts, longest numeric run {worst} (script output had {leaked})", prompts.len()))
}

fn root_prompt(workdir: &Path) -> Result<String, String> {
    logged_prompts(workdir)
        .into_iter()
        .find(|(p, _)| p.to_string_lossy().ends_with("draft_root.json"))
        .map(|(_, t)| t)
        .ok_or_else(|| "no root prompt logged".into())
}

fn ablations() -> Outcome {
    let st = stage(&RidgeScenario::default(), 12, 4);
    let mut run = st.run.clone();
    run.search.ablation_flags.disable_moeo = true;
    let report = run_with_config(&st.task, &run, &st.workdir(), None).map_err(err)?;
    let topo = &report.tree_topology;
    let children = children_map(topo);
    ensure!(children.values().all(|c| c.len() <= 1), "a node has several children");
    for pair in topo.nodes.windows(2) {
        ensure!(pair[1].parent == Some(pair[0].id), "node {} does not extend the previous node", pair[1].id);
    }
    let chain = topo.nodes.len();

    let st = stage(&RidgeScenario::default(), 3, 5);
    let mut run = st.run.clone();
    run.search.ablation_flags.disable_domain_init = true;
    run_with_config(&st.task, &run, &st.workdir(), None).map_err(err)?;
    let ablated = root_prompt(&st.workdir())?;
    for heading in ["## Data constraints", "## Architectural priors"] {
        ensure!(!ablated.contains(heading), "ablated root prompt contains {heading:?}");
    }
    ensure!(!st.workdir().join("constraints.json").exists(), "constraints.json written under ablation");

    let st = stage(&RidgeScenario::default(), 3, 5);
    run_with_config(&st.task, &st.run, &st.workdir(), None).map_err(err)?;
    let full = root_prompt(&st.workdir())?;
    for heading in ["## Data constraints", "## Architectural priors"] {
        ensure!(full.contains(heading), "control root prompt lacks {heading:?}");
    }
    Ok(format!("chain of {chain} nodes; root prompt without constraints and priors (control has both)"))
}

// ---------------------------------------------------------------- runner

struct Criterion {
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "efficiency term exactness", limit: Duration::from_secs(1), check: gamma_exactness },
        Criterion { name: "reward composition", limit: Duration::from_secs(1), check: reward_composition },
        Criterion { name: "spectral oracle", limit: Duration::from_secs(30), check: spectral_oracle },
        Criterion { name: "EDF round-trip", limit: Duration::from_secs(10), check: edf_round_trip },
        Criterion { name: "tree/journal properties", limit: Duration::from_secs(10), check: tree_properties },
        Criterion { name: "end-to-end ridge run", limit: Duration::from_secs(60), check: ridge_run },
        Criterion { name: "debug routing", limit: Duration::from_secs(30), check: debug_routing },
        Criterion { name: "budget and parallelism", limit: Duration::from_secs(120), check: budget_and_parallelism },
        Criterion { name: "timeout enforcement", limit: Duration::from_secs(10), check: timeout_enforcement },
        Criterion { name: "privacy scan", limit: Duration::from_secs(60), check: privacy_scan },
        Criterion { name: "ablation structure", limit: Duration::from_secs(60), check: ablations },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let result = match result {
            Ok(detail) if elapsed > c.limit => Err(format!("{detail}; exceeded {:.0?}", c.limit)),
            r => r,
        };
        let timing = format!("{:.2}s/{}s", elapsed.as_secs_f64(), c.limit.as_secs());
        match result {
            Ok(detail) => println!("PASS  {:<28} [{timing}] {detail}", c.name),
            Err(why) => {
                failed += 1;
                println!("FAIL  {:<28} [{timing}] {why}", c.name);
            }
        }
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
