//! Independent oracles and scenario helpers shared by the integration tests.
//!
//! Nothing here calls into the code it checks: the DFT, the EDF writer, the
//! reward arithmetic and the numeric-run scanner are written from their
//! definitions.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use weave::fixtures::{write_ridge_workspace, RidgeScenario};
use weave::llm::TaskSpec;
use weave::search::RunConfig;

// ---------------------------------------------------------------- reward

/// Efficiency from its definition, with no clamping helpers.
pub fn gamma_oracle(tau: f64, tau_max: f64) -> f64 {
    if tau <= 0.0 {
        1.0
    } else if tau >= tau_max {
        0.0
    } else {
        1.0 - (tau / tau_max).sqrt()
    }
}

/// Weighted reward written out term by term.
pub fn reward_oracle(terms: [f64; 5], w: [f64; 5]) -> f64 {
    let [m, delta, novelty, gamma, phi] = terms;
    let [w_m, w_i, w_n, w_e, w_fix] = w;
    w_m * m + w_i * delta + w_n * novelty + w_e * gamma + w_fix * phi
}

// ---------------------------------------------------------------- spectra

/// Exact periodogram of the mean-removed signal: `(frequency, power)` for
/// every non-negative DFT bin, computed with an O(N^2) sum.
pub fn dft_power(samples: &[f64], fs: f64) -> Vec<(f64, f64)> {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = samples.iter().map(|v| v - mean).collect();
    let cos: Vec<f64> = (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).cos()).collect();
    let sin: Vec<f64> = (0..n).map(|k| (2.0 * PI * k as f64 / n as f64).sin()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            let mut idx = 0usize;
            for v in &x {
                re += v * cos[idx];
                im -= v * sin[idx];
                idx += k;
                if idx >= n {
                    idx -= n;
                }
            }
            (k as f64 * fs / n as f64, re * re + im * im)
        })
        .collect()
}

/// Power fraction of `[lo, hi]` within `[ref_lo, ref_hi]`.
///
/// The estimator reports power on a 1 Hz grid and a grid point stands for
/// the 1 Hz cell around it, so both bands are widened to the cells whose
/// centres they contain before integrating the exact periodogram.
pub fn oracle_fraction(power: &[(f64, f64)], lo: f64, hi: f64, ref_lo: f64, ref_hi: f64) -> f64 {
    let cells = |a: f64, b: f64| ((a - 1e-9).ceil() - 0.5, (b + 1e-9).floor() + 0.5);
    let integrate = |(a, b): (f64, f64)| -> f64 {
        power.iter().filter(|(f, _)| *f >= a - 1e-9 && *f < b - 1e-9).map(|(_, p)| p).sum()
    };
    let (lo, hi) = (lo.max(ref_lo), hi.min(ref_hi));
    let total = integrate(cells(ref_lo, ref_hi));
    if lo > hi || total <= 0.0 {
        return 0.0;
    }
    integrate(cells(lo, hi)) / total
}

/// A seeded test signal: on-grid tones plus white noise.
#[derive(Debug, Clone)]
pub struct ToneSignal {
    pub fs: f64,
    pub samples: Vec<f64>,
}

/// Every band the tests use carries one tone, so each ratio is dominated by
/// a deterministic component rather than by the noise floor, where the two
/// estimators legitimately differ by their sampling variance. Tones sit on
/// the DFT grid of the whole signal and at least 1.5 Hz from every 1 Hz
/// cell boundary of those bands, so the Hann main lobe never straddles an
/// edge.
pub fn random_signal(seed: u64) -> ToneSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = [128.0, 160.0, 200.0, 256.0][rng.random_range(0..4)];
    let secs = rng.random_range(10..=12) as f64;
    let n = (fs * secs) as usize;
    let regions = [
        (2.5, 2.5),
        (6.0, 6.0),
        (9.5, 11.5),
        (15.5, 27.5),
        (31.5, 46.5),
        (50.0, 50.0),
        (60.0, 60.0),
        (63.5, fs / 2.0 - 2.5),
    ];
    let mut tones = Vec::new();
    for (lo, hi) in regions {
        if lo > hi {
            continue;
        }
        let f = (rng.random_range(lo..=hi) * secs).round() / secs;
        tones.push((f, rng.random_range(0.5..2.0), rng.random_range(0.0..2.0 * PI)));
    }
    let sigma = rng.random_range(0.05..0.5);
    let normal = rand_distr::Normal::new(0.0, sigma).expect("valid sigma");
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let tonal: f64 = tones.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            tonal + rng.sample(normal)
        })
        .collect();
    ToneSignal { fs, samples }
}

pub fn relative_error(estimate: f64, oracle: f64) -> f64 {
    (estimate - oracle).abs() / oracle.abs().max(1e-12)
}

// ---------------------------------------------------------------- EDF

/// One signal for [`write_edf_oracle`].
#[derive(Debug, Clone)]
pub struct OracleSignal {
    pub label: String,
    pub unit: String,
    pub samples_per_record: usize,
    pub digital: Vec<i16>,
}

/// Writes an EDF (or EDF+ when `plus`) file field by field from the format
/// description, independent of the library writer.
pub fn write_edf_oracle(path: &Path, record_duration: &str, records: usize, signals: &[OracleSignal], plus: bool) {
    let ns = signals.len();
    let mut h = String::new();
    let field = |h: &mut String, s: &str, w: usize| {
        assert!(s.len() <= w, "field {s:?} wider than {w}");
        h.push_str(&format!("{s:<w$}"));
    };
    field(&mut h, "0", 8);
    field(&mut h, "MCH-0234567 F 02-MAY-1951 Haagse_Harry", 80);
    field(&mut h, "Startdate 02-MAR-2002 EMG561 BK/JOP Sony. MNC R Sc", 80);
    field(&mut h, "02.03.02", 8);
    field(&mut h, "16.15.00", 8);
    field(&mut h, &(256 * (ns + 1)).to_string(), 8);
    field(&mut h, if plus { "EDF+C" } else { "" }, 44);
    field(&mut h, &records.to_string(), 8);
    field(&mut h, record_duration, 8);
    field(&mut h, &ns.to_string(), 4);
    let per = |h: &mut String, w: usize, f: &dyn Fn(&OracleSignal) -> String| {
        for s in signals {
            field(h, &f(s), w);
        }
    };
    per(&mut h, 16, &|s| s.label.clone());
    per(&mut h, 80, &|_| "AgAgCl cup electrodes".into());
    per(&mut h, 8, &|s| s.unit.clone());
    per(&mut h, 8, &|_| "-3276.8".into());
    per(&mut h, 8, &|_| "3276.7".into());
    per(&mut h, 8, &|_| "-32768".into());
    per(&mut h, 8, &|_| "32767".into());
    per(&mut h, 80, &|_| "HP:0.1Hz LP:75Hz".into());
    per(&mut h, 8, &|s| s.samples_per_record.to_string());
    per(&mut h, 32, &|_| String::new());
    assert_eq!(h.len(), 256 * (ns + 1));

    let mut bytes = h.into_bytes();
    for r in 0..records {
        for s in signals {
            let n = s.samples_per_record;
            for v in &s.digital[r * n..(r + 1) * n] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(path).expect("create edf");
    f.write_all(&bytes).expect("write edf");
}

/// What the probe must report for a file written by [`write_edf_oracle`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdfTruth {
    pub channels: usize,
    pub rates: Vec<f64>,
    pub duration: f64,
    pub labels: Vec<String>,
    /// Physical values per data signal (gain 0.1, zero offset).
    pub physical: Vec<Vec<f64>>,
}

/// A randomized EDF file; returns what it should parse back to.
pub fn random_edf(path: &Path, seed: u64) -> EdfTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (rd_text, rd) = [("1", 1.0), ("0.5", 0.5), ("2", 2.0), ("0.25", 0.25), ("1.000000", 1.0)][rng.random_range(0..5)];
    let records = rng.random_range(1..=30);
    let ns = rng.random_range(1..=12);
    let plus = rng.random_bool(0.3);
    let alphabet: Vec<char> = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_.".chars().collect();
    let mut signals = Vec::new();
    let mut truth = EdfTruth { channels: ns, rates: vec![], duration: rd * records as f64, labels: vec![], physical: vec![] };
    let annotation_slot = if plus { Some(rng.random_range(0..=ns)) } else { None };
    for i in 0..=ns {
        if Some(i) == annotation_slot {
            let spr = 30;
            signals.push(OracleSignal {
                label: "EDF Annotations".into(),
                unit: String::new(),
                samples_per_record: spr,
                digital: vec![0; spr * records],
            });
        }
        if i == ns {
            break;
        }
        let mut label: String = (0..rng.random_range(1..=7)).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
        if rng.random_bool(0.3) {
            label = format!("EEG {label}");
        }
        let spr = [1, 8, 25, 50, 64, 100, 128, 200, 256][rng.random_range(0..9)];
        let digital: Vec<i16> = (0..spr * records).map(|_| rng.random()).collect();
        truth.labels.push(label.clone());
        truth.rates.push(spr as f64 / rd);
        truth.physical.push(digital.iter().map(|d| f64::from(*d) * 0.1).collect());
        signals.push(OracleSignal { label, unit: "uV".into(), samples_per_record: spr, digital });
    }
    write_edf_oracle(path, rd_text, records, &signals, plus);
    truth
}

// ---------------------------------------------------------------- privacy

/// Longest run of numeric literals separated only by whitespace or list
/// punctuation. Quotes and words break a run.
pub fn longest_literal_run(text: &str) -> usize {
    let number = Regex::new(r"^[-+]?(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$").expect("static regex");
    let mut best = 0;
    let mut run = 0;
    for token in text.split(|c: char| c.is_whitespace() || ",;:[](){}|".contains(c)) {
        if token.is_empty() {
            continue;
        }
        if number.is_match(token) {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Every prompt message logged by the gateway under `llm_log`.
pub fn logged_prompts(workdir: &Path) -> Vec<(PathBuf, String)> {
    let dir = workdir.join("llm_log");
    let mut out = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(&dir).expect("llm_log exists").map(|e| e.unwrap().path()).collect();
    entries.sort();
    for path in entries {
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        let messages = doc["request"]["messages"].as_array().expect("logged messages");
        let text: Vec<&str> = messages.iter().filter_map(|m| m["content"].as_str()).collect();
        out.push((path, text.join("\n")));
    }
    out
}

// ---------------------------------------------------------------- runs

/// A ridge-peak scenario staged in a fresh directory.
pub struct Staged {
    pub dir: tempfile::TempDir,
    pub task: TaskSpec,
    pub run: RunConfig,
}

impl Staged {
    pub fn workdir(&self) -> PathBuf {
        self.dir.path().join("work")
    }
}

pub fn stage(scenario: &RidgeScenario, budget: usize, seed: u64) -> Staged {
    let dir = tempfile::tempdir().expect("tempdir");
    let ws = write_ridge_workspace(dir.path(), scenario, budget, seed).expect("workspace");
    let task = TaskSpec::load(&ws.task).expect("task loads");
    let run = RunConfig::load(&ws.run).expect("run config loads");
    Staged { dir, task, run }
}

/// Parent links of a topology, for structural checks.
pub fn children_map(topology: &weave::tree::Topology) -> BTreeMap<u64, Vec<u64>> {
    let mut map: BTreeMap<u64, Vec<u64>> = topology.nodes.iter().map(|n| (n.id.0, Vec::new())).collect();
    for (parent, child) in &topology.edges {
        map.entry(parent.0).or_default().push(child.0);
    }
    map
}

// ---------------------------------------------------------------- reward cases

use weave::reward::{compose_reward, RewardWeights};
use weave::sandbox::{ExecutionOutcome, ExecutionStatus, MetricReport};

/// One randomized scoring situation.
#[derive(Debug, Clone)]
pub struct RewardCase {
    pub metric: f64,
    pub parent: Option<f64>,
    pub success: bool,
    pub tau: f64,
    pub tau_max: f64,
    pub novelty: f64,
    pub weights: [f64; 5],
}

pub fn random_reward_case(rng: &mut ChaCha8Rng) -> RewardCase {
    let mut weights = [0.0; 5];
    for w in &mut weights {
        *w = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..1.0) };
    }
    weights[rng.random_range(0..5)] += 0.01;
    let tau_max = rng.random_range(0.5..1200.0);
    RewardCase {
        metric: rng.random_range(0.0..=1.0),
        parent: rng.random_bool(0.8).then(|| rng.random_range(0.0..=1.0)),
        success: rng.random_bool(0.7),
        tau: rng.random_range(0.0..3.0 * tau_max),
        tau_max,
        novelty: rng.random_range(0.0..=1.0),
        weights,
    }
}

impl RewardCase {
    /// The five terms as defined: performance, improvement over the parent,
    /// novelty, efficiency and executability.
    pub fn oracle_terms(&self) -> [f64; 5] {
        let m = if self.success { self.metric } else { 0.0 };
        let delta = self.parent.map_or(0.0, |p| m - p);
        let phi = if self.success { 1.0 } else { 0.0 };
        [m, delta, self.novelty, gamma_oracle(self.tau, self.tau_max), phi]
    }

    pub fn outcome(&self) -> ExecutionOutcome {
        ExecutionOutcome {
            status: if self.success { ExecutionStatus::Success } else { ExecutionStatus::RuntimeError },
            exit_code: Some(if self.success { 0 } else { 1 }),
            tau_s: self.tau,
            stdout_tail: String::new(),
            stderr_tail: String::new(),
            metrics: self.success.then(|| MetricReport {
                primary_metric: self.metric,
                metric_name: "balanced_accuracy".into(),
                auxiliary: Default::default(),
                wall_seconds_reported: None,
            }),
        }
    }

    fn total_with(&self, weights: [f64; 5]) -> Result<(f64, [f64; 5]), String> {
        let outcome = self.outcome();
        let r = compose_reward(
            outcome.metrics.as_ref(),
            self.parent,
            &outcome,
            self.novelty,
            &RewardWeights::from_array(weights),
            self.tau_max,
        )
        .map_err(|e| e.to_string())?;
        Ok((r.total, r.terms()))
    }

    /// Checks terms and total against the oracle, then the per-weight
    /// finite difference `total(w + h e_k) - total(w) = h term_k`.
    pub fn check(&self) -> Result<(), String> {
        let (total, terms) = self.total_with(self.weights)?;
        let want_terms = self.oracle_terms();
        for (k, (a, b)) in terms.iter().zip(&want_terms).enumerate() {
            if (a - b).abs() > 1e-12 {
                return Err(format!("{self:?}: term {k} is {a}, oracle {b}"));
            }
        }
        let want = reward_oracle(want_terms, self.weights);
        if (total - want).abs() > 1e-12 {
            return Err(format!("{self:?}: total {total}, oracle {want}"));
        }
        let h = 0.125;
        for k in 0..5 {
            let mut w = self.weights;
            w[k] += h;
            let (bumped, _) = self.total_with(w)?;
            let slope = (bumped - total) / h;
            if (slope - want_terms[k]).abs() > 1e-12 / h * 8.0 {
                return Err(format!("{self:?}: d total / d w{k} = {slope}, term {}", want_terms[k]));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------- tree sequences

use proptest::prelude::*;
use weave::reward::RewardBreakdown;
use weave::tree::{journal_replay, Journal, NodeId, NodeKind, NodeStatus, SolutionNode, SolutionTree, TreeError};

/// One step of a randomized tree history.
#[derive(Debug, Clone)]
pub enum TreeOp {
    /// Insert a child of the `pick`-th existing node (modulo its size).
    Child { pick: usize, executed: bool, total: f64 },
    /// Insert a node whose parent does not exist.
    Orphan,
    /// Insert a node whose id is already taken.
    Duplicate { pick: usize },
    /// Insert a second parentless node.
    SecondRoot,
}

pub fn tree_op() -> impl Strategy<Value = TreeOp> {
    prop_oneof![
        8 => (any::<usize>(), any::<bool>(), 0.0..1.0f64).prop_map(|(pick, executed, total)| TreeOp::Child { pick, executed, total }),
        1 => Just(TreeOp::Orphan),
        1 => any::<usize>().prop_map(|pick| TreeOp::Duplicate { pick }),
        1 => Just(TreeOp::SecondRoot),
    ]
}

pub fn tree_history() -> impl Strategy<Value = (bool, f64, Vec<TreeOp>)> {
    (any::<bool>(), 0.0..1.0f64, proptest::collection::vec(tree_op(), 0..60))
}

fn scored(id: u64, parent: Option<u64>, executed: bool, total: f64) -> SolutionNode {
    let kind = if parent.is_none() { NodeKind::Root } else if executed { NodeKind::Refine } else { NodeKind::DebugChild };
    let mut n = SolutionNode::drafted(NodeId(id), parent.map(NodeId), kind, format!("echo {id}"));
    n.status = if executed { NodeStatus::Executed } else { NodeStatus::Failed };
    let perf = if executed { total } else { 0.0 };
    n.reward = Some(RewardBreakdown::from_terms([perf, 0.0, 0.0, 0.0, 0.0], RewardWeights::PERFORMANCE_ONLY));
    n
}

/// Plays a history against a journaled tree and checks, after every step
/// and against an independent parent table: invalid inserts are rejected
/// without effect, depths match, parent links are acyclic and point to
/// older nodes, best-so-far is the running maximum, and replaying the
/// journal reproduces the tree.
pub fn check_tree_history(root_executed: bool, root_total: f64, ops: &[TreeOp]) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("tree.journal");
    let mut tree = SolutionTree::with_journal(Journal::create(&path).map_err(|e| e.to_string())?);
    // Oracle state: parent and depth by id, scores in insertion order.
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut depth: Vec<u32> = Vec::new();
    let mut best_oracle: Vec<Option<f64>> = Vec::new();
    let mut running: Option<f64> = None;
    let record = |executed: bool, total: f64, running: &mut Option<f64>, best: &mut Vec<Option<f64>>| {
        if executed {
            *running = Some(running.map_or(total, |b: f64| b.max(total)));
        }
        best.push(*running);
    };

    tree.insert(scored(0, None, root_executed, root_total)).map_err(|e| e.to_string())?;
    parent.push(None);
    depth.push(0);
    record(root_executed, root_total, &mut running, &mut best_oracle);

    for op in ops {
        let next = parent.len() as u64;
        let before = tree.len();
        match op {
            TreeOp::Child { pick, executed, total } => {
                let p = pick % parent.len();
                let node = tree.insert(scored(next, Some(p as u64), *executed, *total)).map_err(|e| e.to_string())?;
                if node.depth != depth[p] + 1 {
                    return Err(format!("node {next}: depth {} but parent depth {}", node.depth, depth[p]));
                }
                parent.push(Some(p));
                depth.push(depth[p] + 1);
                record(*executed, *total, &mut running, &mut best_oracle);
            }
            TreeOp::Orphan => match tree.insert(scored(next, Some(next + 1000), true, 0.5)) {
                Err(TreeError::UnknownParent(_)) => {}
                other => return Err(format!("orphan accepted: {other:?}")),
            },
            TreeOp::Duplicate { pick } => match tree.insert(scored((pick % parent.len()) as u64, Some(0), true, 0.5)) {
                Err(TreeError::DuplicateId(_)) => {}
                other => return Err(format!("duplicate accepted: {other:?}")),
            },
            TreeOp::SecondRoot => match tree.insert(scored(next, None, true, 0.5)) {
                Err(TreeError::SecondRoot) => {}
                other => return Err(format!("second root accepted: {other:?}")),
            },
        }
        if !matches!(op, TreeOp::Child { .. }) && tree.len() != before {
            return Err("a rejected insert changed the tree".into());
        }
    }

    for (i, n) in tree.iter().enumerate() {
        if n.id != NodeId(i as u64) || n.parent_id.map(|p| p.0 as usize) != parent[i] || n.depth != depth[i] {
            return Err(format!("node {i} disagrees with the oracle table"));
        }
        let mut steps = 0;
        let mut cur = n.parent_id;
        let mut last_seq = n.created_at;
        while let Some(p) = cur {
            let pn = tree.get(p).ok_or(format!("dangling parent {p}"))?;
            if pn.created_at >= last_seq {
                return Err(format!("parent {p} is not older than its child"));
            }
            last_seq = pn.created_at;
            cur = pn.parent_id;
            steps += 1;
            if steps > tree.len() {
                return Err(format!("cycle above node {i}"));
            }
        }
        if steps != n.depth as usize {
            return Err(format!("node {i}: {steps} hops to the root, depth {}", n.depth));
        }
    }

    let best = tree.best_so_far();
    if best != best_oracle {
        return Err(format!("best-so-far {best:?} != oracle {best_oracle:?}"));
    }
    if best.windows(2).any(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b < a) || (w[0].is_some() && w[1].is_none())) {
        return Err("best-so-far decreased".into());
    }

    let replay = journal_replay(&path).map_err(|e| e.to_string())?;
    if replay.tree != tree || !replay.warnings.is_empty() {
        return Err("journal replay differs from the live tree".into());
    }
    Ok(())
}
