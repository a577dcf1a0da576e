//! Scores a few execution outcomes and shows each reward term.
//!
//! Run with `cargo run --example reward_breakdown`.

use weave::reward::{compose_reward, efficiency_term, lexical_novelty, ArchiveEntry, RewardWeights};
use weave::sandbox::{ExecutionOutcome, ExecutionStatus, MetricReport};

const PREAMBLE: &str = "import sys\nimport mne\nimport numpy as np\n\
data_dir = sys.argv[2]\nout_dir = sys.argv[4]\nraw = mne.io.read_raw_edf(data_dir + '/a.edf', preload=True)\n\
raw.pick(['Fp1', 'Fp2', 'C3', 'O1'])\nraw.resample(100)\n";

fn outcome(status: ExecutionStatus, tau_s: f64, metric: Option<f64>) -> ExecutionOutcome {
    ExecutionOutcome {
        status,
        exit_code: Some(0),
        tau_s,
        stdout_tail: String::new(),
        stderr_tail: String::new(),
        metrics: metric.map(|m| MetricReport {
            primary_metric: m,
            metric_name: "balanced_accuracy".into(),
            auxiliary: Default::default(),
            wall_seconds_reported: None,
        }),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau_max = 600.0;
    println!("efficiency curve (tau_max {tau_max} s):");
    for tau in [0.0, 37.5, 150.0, 300.0, 600.0, 1200.0] {
        println!("  tau {tau:>7.1} s -> {:.4}", efficiency_term(tau, tau_max)?);
    }

    let archive = vec![ArchiveEntry {
        script: format!("{PREAMBLE}raw.filter(0.5, 40)\nmodel = fit_lda(epochs(raw))\n"),
        rationale: "bandpass then fit".into(),
    }];
    let candidate = format!("{PREAMBLE}raw.notch_filter(50)\nica = fit_ica(raw)\nmodel = fit_cnn(epochs(ica.apply(raw)))\n");
    let novelty = lexical_novelty(&candidate, &archive);

    let weights = RewardWeights::default();
    let cases = [
        ("fast success", outcome(ExecutionStatus::Success, 60.0, Some(0.7737)), Some(0.70)),
        ("slow success", outcome(ExecutionStatus::Success, 540.0, Some(0.80)), Some(0.70)),
        ("regression", outcome(ExecutionStatus::Success, 60.0, Some(0.60)), Some(0.70)),
        ("crash", outcome(ExecutionStatus::RuntimeError, 5.0, None), Some(0.70)),
        ("timeout", outcome(ExecutionStatus::Timeout, 1200.0, None), Some(0.70)),
        ("root", outcome(ExecutionStatus::Success, 120.0, Some(0.65)), None),
    ];
    println!("\nweights {:?}, novelty {novelty:.3}", weights.as_array());
    println!("{:<14} {:>6} {:>7} {:>6} {:>6} {:>4} {:>7}", "case", "M", "delta", "N", "eff", "Phi", "total");
    for (name, out, parent) in cases {
        let r = compose_reward(out.metrics.as_ref(), parent, &out, novelty, &weights, tau_max)?;
        println!(
            "{name:<14} {:>6.4} {:>7.4} {:>6.3} {:>6.3} {:>4.0} {:>7.4}",
            r.performance, r.improvement, r.novelty, r.efficiency, r.debug, r.total
        );
    }
    Ok(())
}
