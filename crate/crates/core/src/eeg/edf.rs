//! EDF / EDF+ header parsing, sample reading and a small writer.
//!
//! Layout: a 256-byte fixed header followed by 256 bytes per signal, all
//! ASCII fixed-width fields, then data records of 16-bit little-endian
//! samples (signal-major within each record).

use std::fs::File;
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use thiserror::Error;

pub const FIXED_HEADER_LEN: usize = 256;
pub const SIGNAL_HEADER_LEN: usize = 256;
pub const EDF_MAGIC: &[u8; 8] = b"0       ";
pub const ANNOTATION_LABEL: &str = "EDF Annotations";

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("truncated header: need {needed} bytes, file has {actual}")]
    TruncatedHeader { needed: usize, actual: usize },
    #[error("malformed field `{field}`: {value:?}")]
    MalformedField { field: &'static str, value: String },
    #[error("record duration is zero")]
    ZeroRecordDuration,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One signal's header entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalInfo {
    pub label: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub samples_per_record: usize,
}

impl SignalInfo {
    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    fn gain_offset(&self) -> (f64, f64) {
        let dspan = f64::from(self.digital_max) - f64::from(self.digital_min);
        if dspan == 0.0 {
            return (1.0, 0.0);
        }
        let gain = (self.physical_max - self.physical_min) / dspan;
        (gain, self.physical_min - gain * f64::from(self.digital_min))
    }
}

/// Decoded file header.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub plus: bool,
    pub header_bytes: usize,
    /// Number of data records; resolved from the file size when stored as -1.
    pub record_count: usize,
    pub record_duration: f64,
    pub signals: Vec<SignalInfo>,
}

impl EdfHeader {
    pub fn record_bytes(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }

    pub fn duration(&self) -> f64 {
        self.record_count as f64 * self.record_duration
    }

    pub fn sampling_rate(&self, signal: usize) -> f64 {
        self.signals[signal].samples_per_record as f64 / self.record_duration
    }

    /// Indices of the non-annotation signals.
    pub fn data_signals(&self) -> impl Iterator<Item = usize> + '_ {
        self.signals
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_annotation())
            .map(|(i, _)| i)
    }
}

fn field(buf: &[u8]) -> String {
    String::from_utf8_lossy(buf).trim_end_matches([' ', '\0']).trim_start().to_string()
}

fn num<T: std::str::FromStr>(buf: &[u8], name: &'static str) -> Result<T, EdfError> {
    let text = field(buf);
    text.parse::<T>().map_err(|_| EdfError::MalformedField { field: name, value: text })
}

/// Reads and validates the header of an EDF/EDF+ file.
pub fn read_header(path: &Path) -> Result<EdfHeader, EdfError> {
    let mut file = File::open(path)?;
    let file_len = file.metadata()?.len() as usize;
    let mut fixed = [0u8; FIXED_HEADER_LEN];
    if file_len < FIXED_HEADER_LEN {
        return Err(EdfError::TruncatedHeader { needed: FIXED_HEADER_LEN, actual: file_len });
    }
    file.read_exact(&mut fixed)?;

    let plus = field(&fixed[192..236]).starts_with("EDF+");
    let header_bytes: usize = num(&fixed[184..192], "header_bytes")?;
    let raw_records: i64 = num(&fixed[236..244], "record_count")?;
    let record_duration: f64 = num(&fixed[244..252], "record_duration")?;
    let ns: usize = num(&fixed[252..256], "signal_count")?;

    if !record_duration.is_finite() || record_duration < 0.0 {
        return Err(EdfError::MalformedField {
            field: "record_duration",
            value: field(&fixed[244..252]),
        });
    }
    if record_duration == 0.0 {
        return Err(EdfError::ZeroRecordDuration);
    }

    let needed = FIXED_HEADER_LEN + ns * SIGNAL_HEADER_LEN;
    if file_len < needed {
        return Err(EdfError::TruncatedHeader { needed, actual: file_len });
    }
    let mut sig = vec![0u8; ns * SIGNAL_HEADER_LEN];
    file.read_exact(&mut sig)?;

    // Signal fields are stored column-wise: all labels, then all transducers, ...
    let col = |offset: usize, width: usize, i: usize| {
        let start = ns * offset + i * width;
        &sig[start..start + width]
    };
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let samples_per_record: usize = num(col(216, 8, i), "samples_per_record")?;
        signals.push(SignalInfo {
            label: field(col(0, 16, i)),
            physical_dimension: field(col(96, 8, i)),
            physical_min: num(col(104, 8, i), "physical_min")?,
            physical_max: num(col(112, 8, i), "physical_max")?,
            digital_min: num(col(120, 8, i), "digital_min")?,
            digital_max: num(col(128, 8, i), "digital_max")?,
            samples_per_record,
        });
    }

    let mut header = EdfHeader {
        plus,
        header_bytes: if header_bytes == 0 { needed } else { header_bytes },
        record_count: 0,
        record_duration,
        signals,
    };
    header.record_count = if raw_records >= 0 {
        raw_records as usize
    } else {
        file_len.saturating_sub(header.header_bytes).checked_div(header.record_bytes()).unwrap_or(0)
    };
    Ok(header)
}

/// Reads up to `max_seconds` of physical samples for every data signal.
///
/// Returns one vector per entry of [`EdfHeader::data_signals`], in order.
/// Reading stops early at the end of the file.
pub fn read_samples(
    path: &Path,
    header: &EdfHeader,
    max_seconds: f64,
) -> Result<Vec<Vec<f64>>, EdfError> {
    let record_bytes = header.record_bytes();
    let wanted = ((max_seconds / header.record_duration).ceil() as usize).min(header.record_count);
    let data: Vec<usize> = header.data_signals().collect();
    let mut out: Vec<Vec<f64>> = data
        .iter()
        .map(|&i| Vec::with_capacity(header.signals[i].samples_per_record * wanted))
        .collect();
    if record_bytes == 0 {
        return Ok(out);
    }

    let mut file = File::open(path)?;
    file.seek(SeekFrom::Start(header.header_bytes as u64))?;
    let mut record = vec![0u8; record_bytes];
    let scales: Vec<(f64, f64)> = header.signals.iter().map(SignalInfo::gain_offset).collect();

    for _ in 0..wanted {
        match file.read_exact(&mut record) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let mut offset = 0;
        let mut slot = 0;
        for (i, s) in header.signals.iter().enumerate() {
            let n = s.samples_per_record;
            if slot < data.len() && data[slot] == i {
                let (gain, bias) = scales[i];
                out[slot].extend(record[offset..offset + 2 * n].chunks_exact(2).map(|b| {
                    f64::from(i16::from_le_bytes([b[0], b[1]])) * gain + bias
                }));
                slot += 1;
            }
            offset += 2 * n;
        }
    }
    Ok(out)
}

/// A signal to be written by [`write_edf`].
#[derive(Debug, Clone)]
pub struct SignalSpec {
    pub label: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub samples_per_record: usize,
}

/// Writes a plain EDF file. `data[i]` holds physical values for signal `i`
/// and must contain `record_count * samples_per_record` samples.
pub fn write_edf(
    path: &Path,
    signals: &[SignalSpec],
    record_duration: f64,
    record_count: usize,
    data: &[Vec<f64>],
) -> io::Result<()> {
    assert_eq!(signals.len(), data.len(), "one data vector per signal");
    let ns = signals.len();
    let mut head = Vec::with_capacity(FIXED_HEADER_LEN + ns * SIGNAL_HEADER_LEN);
    let put = |head: &mut Vec<u8>, text: &str, width: usize| {
        let mut bytes: Vec<u8> = text.bytes().take(width).collect();
        bytes.resize(width, b' ');
        head.extend_from_slice(&bytes);
    };
    put(&mut head, "0", 8);
    put(&mut head, "X X X X", 80);
    put(&mut head, "Startdate X X X X", 80);
    put(&mut head, "01.01.00", 8);
    put(&mut head, "00.00.00", 8);
    put(&mut head, &(FIXED_HEADER_LEN + ns * SIGNAL_HEADER_LEN).to_string(), 8);
    put(&mut head, "", 44);
    put(&mut head, &record_count.to_string(), 8);
    put(&mut head, &fmt_fixed(record_duration, 8), 8);
    put(&mut head, &ns.to_string(), 4);

    for s in signals {
        put(&mut head, &s.label, 16);
    }
    for _ in signals {
        put(&mut head, "AgAgCl electrode", 80);
    }
    for s in signals {
        put(&mut head, &s.physical_dimension, 8);
    }
    for s in signals {
        put(&mut head, &fmt_fixed(s.physical_min, 8), 8);
    }
    for s in signals {
        put(&mut head, &fmt_fixed(s.physical_max, 8), 8);
    }
    for _ in signals {
        put(&mut head, "-32768", 8);
    }
    for _ in signals {
        put(&mut head, "32767", 8);
    }
    for _ in signals {
        put(&mut head, "", 80);
    }
    for s in signals {
        put(&mut head, &s.samples_per_record.to_string(), 8);
    }
    for _ in signals {
        put(&mut head, "", 32);
    }

    let mut file = io::BufWriter::new(File::create(path)?);
    file.write_all(&head)?;
    for r in 0..record_count {
        for (s, values) in signals.iter().zip(data) {
            let span = s.physical_max - s.physical_min;
            let gain = if span == 0.0 { 1.0 } else { span / 65535.0 };
            let start = r * s.samples_per_record;
            for k in 0..s.samples_per_record {
                let v = values.get(start + k).copied().unwrap_or(0.0);
                let d = ((v - s.physical_min) / gain - 32768.0).round().clamp(-32768.0, 32767.0);
                file.write_all(&(d as i16).to_le_bytes())?;
            }
        }
    }
    file.flush()
}

/// Formats a number so it fits a fixed-width ASCII field.
fn fmt_fixed(value: f64, width: usize) -> String {
    if value.fract() == 0.0 && value.abs() < 1e7 {
        let s = format!("{}", value as i64);
        if s.len() <= width {
            return s;
        }
    }
    for prec in (0..width).rev() {
        let s = format!("{value:.prec$}");
        if s.len() <= width {
            return s;
        }
    }
    format!("{}", value as i64)
}
