//! Builds the constraint descriptor of a recordings directory.
//!
//! Run with `cargo run --example probe_recordings -- [data-dir]`. Without an
//! argument it probes two synthetic recordings, one with mains interference.

use std::path::PathBuf;

use weave::eeg::probe;
use weave::fixtures::{write_recording, RecordingSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            write_recording(&scratch.path().join("clean.edf"), &RecordingSpec::default())?;
            let noisy = RecordingSpec { line_noise: Some((50.0, 40.0)), seed: 8, ..RecordingSpec::default() };
            write_recording(&scratch.path().join("noisy.edf"), &noisy)?;
            std::fs::write(scratch.path().join("notes.txt"), "session notes\n")?;
            scratch.path().to_path_buf()
        }
    };
    let constraints = probe(&dir, 5)?;
    println!("{}", constraints.to_json(Some(&dir)));
    Ok(())
}
