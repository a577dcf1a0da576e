//! Data preview: inventory of a raw data directory and the constraint
//! vector (intrinsic attributes plus artifact-quality ratios) derived from it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::edf::{self, EdfError, EdfHeader};
use super::spectral::{estimate_band_ratio, estimate_powerline};

/// Seconds of signal read per file for quality estimation.
pub const QUALITY_WINDOW_S: f64 = 60.0;
pub const DEFAULT_SAMPLE_BUDGET: usize = 5;
pub const EOG_BAND: (f64, f64) = (0.5, 4.0);
pub const EMG_LOW_HZ: f64 = 30.0;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("path not found: {0}")]
    PathNotFound(PathBuf),
    #[error("permission denied: {0}")]
    PermissionDenied(PathBuf),
    #[error("no parseable EDF recordings in inventory")]
    NoParseableRecordings,
    #[error("{path}: {source}")]
    Edf { path: PathBuf, source: EdfError },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn io_err(path: &Path, e: io::Error) -> ProbeError {
    match e.kind() {
        io::ErrorKind::NotFound => ProbeError::PathNotFound(path.to_path_buf()),
        io::ErrorKind::PermissionDenied => ProbeError::PermissionDenied(path.to_path_buf()),
        _ => ProbeError::Io(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormatTag {
    #[serde(rename = "EDF")]
    Edf,
    #[serde(rename = "EDF+")]
    EdfPlus,
    #[serde(rename = "UNKNOWN")]
    Unknown,
}

impl FormatTag {
    pub fn is_edf(self) -> bool {
        matches!(self, FormatTag::Edf | FormatTag::EdfPlus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryEntry {
    pub path: PathBuf,
    pub format: FormatTag,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingInventory {
    pub root_path: PathBuf,
    pub files: Vec<InventoryEntry>,
    pub total_files: usize,
}

impl RecordingInventory {
    pub fn edf_files(&self) -> impl Iterator<Item = &InventoryEntry> {
        self.files.iter().filter(|f| f.format.is_edf())
    }
}

fn sniff(path: &Path) -> io::Result<FormatTag> {
    let mut head = [0u8; 236];
    let mut file = fs::File::open(path)?;
    let mut read = 0;
    while read < head.len() {
        match file.read(&mut head[read..])? {
            0 => break,
            n => read += n,
        }
    }
    if read >= 8 && &head[..8] == edf::EDF_MAGIC {
        if read >= 197 && head[192..197] == *b"EDF+C" || read >= 197 && head[192..197] == *b"EDF+D" {
            return Ok(FormatTag::EdfPlus);
        }
        return Ok(FormatTag::Edf);
    }
    Ok(FormatTag::Unknown)
}

/// Lists regular files under `root`, descending at most `recursion_limit`
/// directory levels (0 = root only). Entries are sorted by path.
pub fn scan_directory(root: &Path, recursion_limit: usize) -> Result<RecordingInventory, ProbeError> {
    let meta = fs::metadata(root).map_err(|e| io_err(root, e))?;
    if !meta.is_dir() {
        return Err(ProbeError::PathNotFound(root.to_path_buf()));
    }
    let mut files = Vec::new();
    let mut stack = vec![(root.to_path_buf(), 0usize)];
    while let Some((dir, depth)) = stack.pop() {
        let entries = fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
        for entry in entries {
            let entry = entry?;
            let path = entry.path();
            let ft = entry.file_type()?;
            if ft.is_dir() {
                if depth < recursion_limit {
                    stack.push((path, depth + 1));
                }
            } else if ft.is_file() {
                let bytes = entry.metadata()?.len();
                let format = sniff(&path).map_err(|e| io_err(&path, e))?;
                files.push(InventoryEntry { path, format, bytes });
            }
        }
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(RecordingInventory { root_path: root.to_path_buf(), total_files: files.len(), files })
}

/// Intrinsic signal attributes of a recording (data signals only; the EDF+
/// annotation channel is excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntrinsicAttributes {
    pub sampling_rate: Vec<f64>,
    pub channel_labels: Vec<String>,
    pub channel_count: usize,
    pub duration: f64,
    pub physical_units: Vec<String>,
}

impl IntrinsicAttributes {
    fn from_header(h: &EdfHeader) -> Self {
        let idx: Vec<usize> = h.data_signals().collect();
        IntrinsicAttributes {
            sampling_rate: idx.iter().map(|&i| h.sampling_rate(i)).collect(),
            channel_labels: idx.iter().map(|&i| h.signals[i].label.clone()).collect(),
            channel_count: idx.len(),
            duration: h.duration(),
            physical_units: idx.iter().map(|&i| h.signals[i].physical_dimension.clone()).collect(),
        }
    }

    /// Most common per-signal sampling rate (smallest on ties).
    pub fn dominant_rate(&self) -> Option<f64> {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for r in &self.sampling_rate {
            *counts.entry(r.to_bits()).or_default() += 1;
        }
        let mut best: Option<(f64, usize)> = None;
        for (bits, n) in counts {
            let r = f64::from_bits(bits);
            best = match best {
                Some((br, bn)) if bn > n || (bn == n && br <= r) => Some((br, bn)),
                _ => Some((r, n)),
            };
        }
        best.map(|(r, _)| r)
    }
}

/// Parses an EDF header into intrinsic attributes.
pub fn parse_edf_header(file: &Path) -> Result<IntrinsicAttributes, EdfError> {
    edf::read_header(file).map(|h| IntrinsicAttributes::from_header(&h))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ArtifactQuality {
    pub powerline_ratio_50: f64,
    pub powerline_ratio_60: f64,
    pub eog_index: f64,
    pub emg_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintVector {
    pub intrinsic: IntrinsicAttributes,
    pub quality: ArtifactQuality,
    pub sampled_files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub edf_files: usize,
    pub unknown_files: Vec<PathBuf>,
}

/// The serialized form written to `constraints.json` and shown to the
/// generator. Only labels and derived scalars appear here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintDescriptor {
    pub sampling_rate_hz: f64,
    pub distinct_sampling_rates_hz: Vec<f64>,
    pub channel_labels: Vec<String>,
    pub channel_count: usize,
    pub physical_units: Vec<String>,
    pub duration_s: f64,
    pub powerline_ratio_50: f64,
    pub powerline_ratio_60: f64,
    pub eog_index: f64,
    pub emg_ratio: f64,
    pub warnings: Vec<String>,
    pub edf_file_count: usize,
    pub unknown_format_files: Vec<String>,
    pub sampled_files: Vec<String>,
}

/// Stops a long list of unknown files from flooding the descriptor.
const MAX_LISTED_UNKNOWN: usize = 20;

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn display_name(root: Option<&Path>, p: &Path) -> String {
    root.and_then(|r| p.strip_prefix(r).ok())
        .unwrap_or(p)
        .to_string_lossy()
        .into_owned()
}

impl ConstraintVector {
    pub fn descriptor(&self, root: Option<&Path>) -> ConstraintDescriptor {
        let mut distinct: Vec<f64> = Vec::new();
        for r in &self.intrinsic.sampling_rate {
            if !distinct.contains(r) {
                distinct.push(*r);
            }
        }
        distinct.sort_by(f64::total_cmp);
        let mut unknown: Vec<String> =
            self.unknown_files.iter().take(MAX_LISTED_UNKNOWN).map(|p| display_name(root, p)).collect();
        if self.unknown_files.len() > MAX_LISTED_UNKNOWN {
            unknown.push(format!("... and {} more", self.unknown_files.len() - MAX_LISTED_UNKNOWN));
        }
        ConstraintDescriptor {
            sampling_rate_hz: self.intrinsic.dominant_rate().unwrap_or(0.0),
            distinct_sampling_rates_hz: distinct,
            channel_labels: self.intrinsic.channel_labels.clone(),
            channel_count: self.intrinsic.channel_count,
            physical_units: dedup(&self.intrinsic.physical_units),
            duration_s: round6(self.intrinsic.duration),
            powerline_ratio_50: round6(self.quality.powerline_ratio_50),
            powerline_ratio_60: round6(self.quality.powerline_ratio_60),
            eog_index: round6(self.quality.eog_index),
            emg_ratio: round6(self.quality.emg_ratio),
            warnings: self.warnings.clone(),
            edf_file_count: self.edf_files,
            unknown_format_files: unknown,
            sampled_files: self.sampled_files.iter().map(|p| display_name(root, p)).collect(),
        }
    }

    /// Pretty JSON rendering of [`Self::descriptor`].
    pub fn to_json(&self, root: Option<&Path>) -> String {
        serde_json::to_string_pretty(&self.descriptor(root)).expect("descriptor serializes")
    }
}

fn dedup(items: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

/// Channels whose label marks a frontal (ocular-adjacent) site.
pub fn frontal_channels(labels: &[String]) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            let name = l.trim().to_ascii_uppercase();
            // Some montages prefix labels with the modality, e.g. "EEG Fp1-REF".
            let name = name.strip_prefix("EEG ").unwrap_or(&name).trim_start();
            name.starts_with("FP") || name.starts_with("AF")
        })
        .map(|(i, _)| i)
        .collect()
}

/// Which channels feed the EOG index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EogChannels {
    FrontalOrAll,
    All,
}

/// Quality ratios for one file, averaged over its channels.
#[derive(Debug, Clone, Default)]
pub struct FileQuality {
    pub powerline_50: Option<f64>,
    pub powerline_60: Option<f64>,
    pub eog: Option<f64>,
    pub emg: Option<f64>,
    pub warnings: Vec<String>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Computes the per-file quality ratios from the first 60 s of data.
pub fn file_quality(path: &Path, eog: EogChannels) -> Result<FileQuality, ProbeError> {
    let header = edf::read_header(path).map_err(|source| ProbeError::Edf { path: path.into(), source })?;
    let data = edf::read_samples(path, &header, QUALITY_WINDOW_S)
        .map_err(|source| ProbeError::Edf { path: path.into(), source })?;
    let attrs = IntrinsicAttributes::from_header(&header);
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();

    let mut q = FileQuality::default();
    let (mut p50, mut p60, mut emg) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = BTreeMap::<String, usize>::new();
    let mut note = |what: String| *skipped.entry(what).or_default() += 1;

    for (ch, samples) in data.iter().enumerate() {
        let fs = attrs.sampling_rate[ch];
        match estimate_powerline(samples, fs, 50.0) {
            Ok(r) => p50.push(r),
            Err(e) => note(format!("powerline_50: {e}")),
        }
        match estimate_powerline(samples, fs, 60.0) {
            Ok(r) => p60.push(r),
            Err(e) => note(format!("powerline_60: {e}")),
        }
        if fs / 2.0 - 1.0 > EMG_LOW_HZ {
            match estimate_band_ratio(samples, fs, EMG_LOW_HZ, fs / 2.0 - 1.0) {
                Ok(r) => emg.push(r),
                Err(e) => note(format!("emg: {e}")),
            }
        } else {
            note(format!("emg: sampling rate {fs} Hz below {} Hz", 2.0 * (EMG_LOW_HZ + 1.0)));
        }
    }

    let frontal = frontal_channels(&attrs.channel_labels);
    let eog_set: Vec<usize> = match eog {
        EogChannels::FrontalOrAll if !frontal.is_empty() => frontal,
        _ => (0..data.len()).collect(),
    };
    let mut eogv = Vec::new();
    for ch in eog_set {
        let fs = attrs.sampling_rate[ch];
        match estimate_band_ratio(&data[ch], fs, EOG_BAND.0, EOG_BAND.1) {
            Ok(r) => eogv.push(r),
            Err(e) => note(format!("eog: {e}")),
        }
    }

    q.powerline_50 = mean(&p50);
    q.powerline_60 = mean(&p60);
    q.emg = mean(&emg);
    q.eog = mean(&eogv);
    q.warnings = skipped
        .into_iter()
        .map(|(what, n)| format!("{name}: {n} channel(s) skipped for {what}"))
        .collect();
    Ok(q)
}

/// Builds the constraint vector from up to `sample_budget` EDF files.
pub fn extract_constraints(
    inventory: &RecordingInventory,
    sample_budget: usize,
) -> Result<ConstraintVector, ProbeError> {
    extract_constraints_with(inventory, sample_budget, EogChannels::FrontalOrAll)
}

pub fn extract_constraints_with(
    inventory: &RecordingInventory,
    sample_budget: usize,
    eog: EogChannels,
) -> Result<ConstraintVector, ProbeError> {
    let budget = sample_budget.max(1);
    let mut warnings = Vec::new();
    let mut reference: Option<(IntrinsicAttributes, PathBuf)> = None;
    let mut sampled = Vec::new();
    let (mut p50, mut p60, mut eogs, mut emgs) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let root = inventory.root_path.as_path();

    for entry in inventory.edf_files() {
        if sampled.len() >= budget {
            break;
        }
        let rel = display_name(Some(root), &entry.path);
        let attrs = match parse_edf_header(&entry.path) {
            Ok(a) => a,
            Err(e) => {
                warnings.push(format!("{rel}: unparseable header ({e})"));
                continue;
            }
        };
        match &reference {
            None => reference = Some((attrs.clone(), entry.path.clone())),
            Some((first, _)) => {
                if first.channel_labels != attrs.channel_labels {
                    warnings.push(format!(
                        "{rel}: channel layout differs ({} channels vs {})",
                        attrs.channel_count, first.channel_count
                    ));
                }
                if first.sampling_rate != attrs.sampling_rate {
                    let rates = attrs.dominant_rate().unwrap_or(0.0);
                    warnings.push(format!(
                        "{rel}: sampling rate differs ({rates} Hz vs {} Hz)",
                        first.dominant_rate().unwrap_or(0.0)
                    ));
                }
            }
        }
        match file_quality(&entry.path, eog) {
            Ok(q) => {
                p50.extend(q.powerline_50);
                p60.extend(q.powerline_60);
                eogs.extend(q.eog);
                emgs.extend(q.emg);
                warnings.extend(q.warnings);
            }
            Err(e) => warnings.push(format!("{rel}: quality estimation failed ({e})")),
        }
        sampled.push(entry.path.clone());
    }

    let (intrinsic, _) = reference.ok_or(ProbeError::NoParseableRecordings)?;
    let unknown_files: Vec<PathBuf> = inventory
        .files
        .iter()
        .filter(|f| f.format == FormatTag::Unknown)
        .map(|f| f.path.clone())
        .collect();
    Ok(ConstraintVector {
        intrinsic,
        quality: ArtifactQuality {
            powerline_ratio_50: mean(&p50).unwrap_or(0.0),
            powerline_ratio_60: mean(&p60).unwrap_or(0.0),
            eog_index: mean(&eogs).unwrap_or(0.0),
            emg_ratio: mean(&emgs).unwrap_or(0.0),
        },
        sampled_files: sampled,
        warnings,
        edf_files: inventory.edf_files().count(),
        unknown_files,
    })
}

/// Scans `root` and extracts constraints in one step.
pub fn probe(root: &Path, sample_budget: usize) -> Result<ConstraintVector, ProbeError> {
    let inventory = scan_directory(root, 8)?;
    extract_constraints(&inventory, sample_budget)
}
