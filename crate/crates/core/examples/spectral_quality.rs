//! Welch band ratios for synthetic signals with growing mains interference.
//!
//! Run with `cargo run --example spectral_quality`.

use std::f64::consts::PI;

use weave::eeg::{estimate_band_ratio, estimate_powerline};

fn signal(fs: f64, secs: f64, line_amp: f64) -> Vec<f64> {
    (0..(fs * secs) as usize)
        .map(|i| {
            let t = i as f64 / fs;
            20.0 * (2.0 * PI * 10.0 * t).sin() + 8.0 * (2.0 * PI * 2.0 * t).sin() + line_amp * (2.0 * PI * 50.0 * t).sin()
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 250.0;
    println!("{:>9} {:>9} {:>9} {:>9} {:>9}", "line uV", "50 Hz", "60 Hz", "EOG", "EMG");
    for amp in [0.0, 5.0, 10.0, 20.0, 40.0, 80.0] {
        let x = signal(fs, 20.0, amp);
        println!(
            "{amp:>9.1} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            estimate_powerline(&x, fs, 50.0)?,
            estimate_powerline(&x, fs, 60.0)?,
            estimate_band_ratio(&x, fs, 0.5, 4.0)?,
            estimate_band_ratio(&x, fs, 30.0, fs / 2.0)?,
        );
    }
    Ok(())
}
