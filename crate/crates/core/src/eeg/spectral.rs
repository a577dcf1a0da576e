//! Welch power spectra and relative band-power ratios.
//!
//! Segments are one second long (`round(fs)` samples), Hann-windowed, with
//! 50% overlap. A ratio is the fraction of the reference band's power that
//! falls in the target band; bands are closed intervals over bin centres.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

/// Half-width of the powerline band in Hz.
pub const POWERLINE_HALF_WIDTH: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("need at least {needed} samples (2 s), got {actual}")]
    WindowTooShort { needed: usize, actual: usize },
    #[error("signal contains non-finite samples")]
    NonFiniteInput,
    #[error("sampling rate {fs} Hz cannot resolve {line_freq} Hz")]
    NyquistViolation { fs: f64, line_freq: f64 },
    #[error("invalid band [{lo}, {hi}] for sampling rate {fs} Hz")]
    InvalidBand { lo: f64, hi: f64, fs: f64 },
}

/// One-sided power spectral density.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub resolution: f64,
    pub density: Vec<f64>,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    /// Integrated power over bins whose centre lies in `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.density
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = self.frequency(*k);
                f >= lo - 1e-9 && f <= hi + 1e-9
            })
            .map(|(_, p)| p * self.resolution)
            .sum()
    }
}

fn check_signal(samples: &[f64], fs: f64) -> Result<usize, SpectralError> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(SpectralError::InvalidBand { lo: 0.0, hi: 0.0, fs });
    }
    let needed = (2.0 * fs).ceil() as usize;
    if samples.len() < needed {
        return Err(SpectralError::WindowTooShort { needed, actual: samples.len() });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(SpectralError::NonFiniteInput);
    }
    Ok(fs.round().max(2.0) as usize)
}

/// Welch estimate with 1 s periodic-Hann segments and 50% overlap.
pub fn welch(samples: &[f64], fs: f64) -> Result<Spectrum, SpectralError> {
    let n = check_signal(samples, fs)?;
    let step = (n / 2).max(1);
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let window_power: f64 = window.iter().map(|w| w * w).sum();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut segments = 0usize;

    let mut start = 0;
    while start + n <= samples.len() {
        let seg = &samples[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((slot, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *slot = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * window_power * segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let one_sided = if k == 0 || (n % 2 == 0 && k == n / 2) { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    Ok(Spectrum { resolution: fs / n as f64, density })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den <= 0.0 || !den.is_finite() {
        return 0.0;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Fraction of power within ±1 Hz of `line_freq`, relative to `[1, fs/2 − 1]` Hz.
pub fn estimate_powerline(samples: &[f64], fs: f64, line_freq: f64) -> Result<f64, SpectralError> {
    if fs <= 2.0 * line_freq {
        return Err(SpectralError::NyquistViolation { fs, line_freq });
    }
    let spec = welch(samples, fs)?;
    let band = spec.band_power(line_freq - POWERLINE_HALF_WIDTH, line_freq + POWERLINE_HALF_WIDTH);
    let total = spec.band_power(1.0, fs / 2.0 - 1.0);
    Ok(ratio(band, total))
}

/// Fraction of power in `[band_lo, band_hi]` relative to `[0.5, fs/2 − 1]` Hz.
/// The target band is intersected with the reference band.
pub fn estimate_band_ratio(
    samples: &[f64],
    fs: f64,
    band_lo: f64,
    band_hi: f64,
) -> Result<f64, SpectralError> {
    if !(band_lo >= 0.0 && band_lo < band_hi && band_hi <= fs / 2.0) {
        return Err(SpectralError::InvalidBand { lo: band_lo, hi: band_hi, fs });
    }
    let spec = welch(samples, fs)?;
    let (ref_lo, ref_hi) = (0.5, fs / 2.0 - 1.0);
    let total = spec.band_power(ref_lo, ref_hi);
    let (lo, hi) = (band_lo.max(ref_lo), band_hi.min(ref_hi));
    let band = if lo <= hi { spec.band_power(lo, hi) } else { 0.0 };
    Ok(ratio(band, total))
}
