//! Deterministic fixtures: synthetic recordings, the ridge-peak task and
//! scripted playbooks.
//!
//! Everything here is seeded and self-contained, so searches can run end to
//! end with nothing but `sh` and `awk` on the path.
//!
//! The ridge-peak task hides an optimum `h*` in the data directory. A
//! candidate declares a hyperparameter `h` and scores
//! `1 - min(1, |h - h*|)`. Playbook REFINE rules move `h` halfway toward
//! `h*`, so a search that keeps refining its best nodes climbs the ridge.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::eeg::edf::{write_edf, SignalSpec};
use crate::llm::{Playbook, PlaybookRule, Role, TaskSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct RecordingSpec {
    pub fs: f64,
    pub seconds: usize,
    pub labels: Vec<String>,
    /// `(frequency Hz, amplitude uV)` sinusoids shared by every channel.
    pub tones: Vec<(f64, f64)>,
    /// Standard deviation of white noise, uV.
    pub noise: f64,
    /// Optional `(frequency Hz, amplitude uV)` mains interference.
    pub line_noise: Option<(f64, f64)>,
    pub seed: u64,
    /// Symmetric physical range of the stored signal, uV.
    pub physical_range: f64,
}

impl Default for RecordingSpec {
    fn default() -> Self {
        RecordingSpec {
            fs: 200.0,
            seconds: 10,
            labels: ["Fp1", "Fp2", "C3", "O1"].iter().map(|s| s.to_string()).collect(),
            tones: vec![(10.0, 20.0)],
            noise: 5.0,
            line_noise: None,
            seed: 7,
            physical_range: 500.0,
        }
    }
}

/// Physical samples for every channel of `spec`.
pub fn synth_signals(spec: &RecordingSpec) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = (spec.fs.round() as usize) * spec.seconds;
    let tau = std::f64::consts::TAU;
    (0..spec.labels.len())
        .map(|ch| {
            let phase = ch as f64 * 0.7;
            (0..n)
                .map(|i| {
                    let t = i as f64 / spec.fs;
                    let mut v: f64 = spec.tones.iter().map(|(f, a)| a * (tau * f * t + phase).sin()).sum();
                    if let Some((f, a)) = spec.line_noise {
                        v += a * (tau * f * t).sin();
                    }
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (v + spec.noise * z).clamp(-spec.physical_range, spec.physical_range)
                })
                .collect()
        })
        .collect()
}

/// Writes `spec` as an EDF file with one-second records.
pub fn write_recording(path: &Path, spec: &RecordingSpec) -> io::Result<()> {
    let per_record = spec.fs.round() as usize;
    let signals: Vec<SignalSpec> = spec
        .labels
        .iter()
        .map(|label| SignalSpec {
            label: label.clone(),
            physical_dimension: "uV".into(),
            physical_min: -spec.physical_range,
            physical_max: spec.physical_range,
            samples_per_record: per_record,
        })
        .collect();
    write_edf(path, &signals, 1.0, spec.seconds, &synth_signals(spec))
}

pub const RIDGE_OPTIMUM_FILE: &str = "ridge_optimum";
pub const RIDGE_RECORDING: &str = "recording.edf";

/// `1 - min(1, |h - h*|)`.
pub fn ridge_score(h: f64, h_star: f64) -> f64 {
    1.0 - (h - h_star).abs().min(1.0)
}

fn fmt_h(h: f64) -> String {
    format!("{h:.6}")
}

/// Creates a ridge-peak data directory under `dir` and returns its task.
pub fn write_ridge_task(dir: &Path, h_star: f64) -> io::Result<TaskSpec> {
    let data = dir.join("data");
    fs::create_dir_all(&data)?;
    write_recording(&data.join(RIDGE_RECORDING), &RecordingSpec::default())?;
    fs::write(data.join(RIDGE_OPTIMUM_FILE), format!("{}\n", fmt_h(h_star)))?;
    Ok(TaskSpec {
        goal: "Tune the pipeline hyperparameter h of a resting-state EEG classifier.".into(),
        evaluation_criteria: "primary_metric is the ridge score in [0, 1]; higher is better.".into(),
        data_dir: data,
        extra_constraints: None,
    })
}

/// A ridge-peak candidate declaring `h`. With `leak_samples` it also dumps
/// raw recording bytes to stdout, which must never reach a prompt.
pub fn ridge_script(h: f64, leak_samples: bool) -> String {
    let leak = if leak_samples {
        "od -An -tu1 -j 4096 -N 512 \"$DATA_DIR/recording.edf\"\n"
    } else {
        ""
    };
    format!(
        r#"#!/bin/sh
# load -> preprocess -> model, reduced to one tunable hyperparameter.
H={h}
while [ $# -gt 0 ]; do
  case "$1" in
    --data-dir) DATA_DIR="$2"; shift 2 ;;
    --output-dir) OUT_DIR="$2"; shift 2 ;;
    *) shift ;;
  esac
done
{leak}HSTAR=$(cat "$DATA_DIR/{opt}")
SCORE=$(awk -v h="$H" -v s="$HSTAR" 'BEGIN {{ d = h - s; if (d < 0) d = -d; if (d > 1) d = 1; printf "%.6f", 1 - d }}')
printf '{{"metric_name":"ridge_score","primary_metric":%s,"auxiliary":{{"h":%s}}}}\n' "$SCORE" "$H" > "$OUT_DIR/metrics.json"
echo "h=$H score=$SCORE"
"#,
        h = fmt_h(h),
        opt = RIDGE_OPTIMUM_FILE,
    )
}

/// A shell script `sh -n` rejects (unterminated `if`).
pub fn broken_script(variant: usize) -> String {
    format!("#!/bin/sh\necho attempt {variant}\nif [ -d \"$2\" ]; then\n  echo data present\n")
}

/// Sleeps for `seconds`, then writes a perfect score.
pub fn sleeper_script(seconds: u64) -> String {
    format!(
        "#!/bin/sh\nsleep {seconds}\nprintf '{{\"metric_name\":\"m\",\"primary_metric\":1}}' > \"$4/metrics.json\"\n"
    )
}

/// Wraps a script in a reply with a rationale and a fenced block.
pub fn reply(rationale: &str, script: &str) -> String {
    format!("{rationale}\n\n```sh\n{script}```\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootBehaviour {
    Valid,
    Broken,
}

/// Parameters of a scripted ridge-peak search.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeScenario {
    pub h0: f64,
    pub h_star: f64,
    /// REFINE steps the playbook knows; refining beyond the last one gets
    /// the default (code-less) reply.
    pub levels: usize,
    pub root: RootBehaviour,
    /// DEBUG replies repair the script (otherwise they stay broken).
    pub debug_repairs: bool,
    pub leak_samples: bool,
}

impl Default for RidgeScenario {
    fn default() -> Self {
        RidgeScenario {
            h0: 0.3,
            h_star: 0.8,
            levels: 12,
            root: RootBehaviour::Valid,
            debug_repairs: true,
            leak_samples: false,
        }
    }
}

impl RidgeScenario {
    /// `h` values from the root onward, each halfway to `h*`.
    pub fn steps(&self) -> Vec<f64> {
        let mut h = self.h0;
        let mut out = vec![h];
        for _ in 0..self.levels {
            h = fmt_h((h + self.h_star) / 2.0).parse().expect("formatted float parses");
            out.push(h);
        }
        out
    }

    pub fn playbook(&self) -> Playbook {
        let steps = self.steps();
        let mut rules = Vec::new();
        let root = match self.root {
            RootBehaviour::Valid => reply("Start from a moderate setting.", &ridge_script(self.h0, self.leak_samples)),
            RootBehaviour::Broken => reply("A first draft.", &broken_script(0)),
        };
        rules.push(PlaybookRule::new(Some(Role::DraftRoot), ".*", root).expect("static pattern"));
        let debug = if self.debug_repairs {
            reply("Close the unterminated block.", &ridge_script(self.h0, self.leak_samples))
        } else {
            reply("Another attempt.", &broken_script(1))
        };
        rules.push(PlaybookRule::new(Some(Role::Debug), ".*", debug).expect("static pattern"));
        for pair in steps.windows(2) {
            let pattern = format!(r"(?m)^H={}$", regex::escape(&fmt_h(pair[0])));
            let response = reply(
                &format!("Move h from {} halfway toward the ridge.", fmt_h(pair[0])),
                &ridge_script(pair[1], self.leak_samples),
            );
            rules.push(PlaybookRule::new(Some(Role::Refine), &pattern, response).expect("escaped pattern"));
        }
        Playbook::from_rules(rules)
    }
}

/// Every code role receives the same quick, valid script.
pub fn constant_playbook(h: f64) -> Playbook {
    let rule = PlaybookRule::new(None, ".*", reply("Keep it simple.", &ridge_script(h, false))).expect("static pattern");
    Playbook::from_rules(vec![rule])
}

/// Interpreter that ignores the script and copies
/// `<data-dir>/canned_metrics.json` into the output directory.
pub fn null_interpreter_cmd() -> Vec<String> {
    vec!["sh".into(), "-c".into(), "cp \"$2/canned_metrics.json\" \"$4/metrics.json\"".into()]
}

pub fn write_canned_metrics(data_dir: &Path, primary_metric: f64) -> io::Result<PathBuf> {
    let path = data_dir.join("canned_metrics.json");
    fs::write(&path, format!("{{\"metric_name\":\"canned\",\"primary_metric\":{primary_metric}}}\n"))?;
    Ok(path)
}

/// Files for a CLI ridge run: `task.toml`, `run.toml`, `playbook.json`.
#[derive(Debug, Clone)]
pub struct RidgeWorkspace {
    pub task: PathBuf,
    pub run: PathBuf,
    pub playbook: PathBuf,
}

/// Writes a complete ridge-peak setup under `dir`.
pub fn write_ridge_workspace(dir: &Path, scenario: &RidgeScenario, budget: usize, seed: u64) -> io::Result<RidgeWorkspace> {
    let task = write_ridge_task(dir, scenario.h_star)?;
    let task_path = dir.join("task.toml");
    fs::write(&task_path, toml::to_string(&TaskSpec { data_dir: PathBuf::from("data"), ..task }).expect("task serializes"))?;
    let playbook = dir.join("playbook.json");
    fs::write(&playbook, scenario.playbook().to_json())?;
    let run = dir.join("run.toml");
    fs::write(
        &run,
        format!(
            "iteration_budget = {budget}\nparallelism = 3\nrandom_seed = {seed}\ntau_max = 10.0\npatience = 30\n\
             interpreter_cmd = [\"sh\"]\nallow_list = []\ntiming_resolution = 0.5\n\n[backend]\nkind = \"mock\"\nplaybook = \"playbook.json\"\n"
        ),
    )?;
    Ok(RidgeWorkspace { task: task_path, run, playbook })
}
