//! Line-delimited JSON journal of every tree mutation.
//!
//! The first line identifies the format and version. Each following line
//! is one [`JournalRecord`]. A torn final line (crash mid-write) is dropped
//! on replay with a warning; damage anywhere else is fatal.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{NodeId, SolutionNode, SolutionTree, TreeError};

pub const JOURNAL_FORMAT: &str = "weave-journal";
pub const JOURNAL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("corrupt journal record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("unsupported journal version {found:?} (expected {JOURNAL_FORMAT} v{JOURNAL_VERSION})")]
    VersionMismatch { found: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JournalRecord {
    /// A node was added to the tree.
    Node { node: SolutionNode },
    /// An expansion job started; `parent` (if any) is now in flight.
    Dispatch { job: NodeId, parent: Option<NodeId>, action: String },
    /// An expansion job finished, with or without producing `job` as a node.
    Release { job: NodeId, parent: Option<NodeId>, produced: bool },
    /// Free-form run event (redrafts, convergence, aborts).
    Note { message: String },
}

/// Append handle. Every record is flushed before `append` returns.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Creates a new journal, truncating any existing file.
    pub fn create(path: &Path) -> Result<Journal, JournalError> {
        let mut file = File::create(path)?;
        let header = serde_json::to_string(&Header { format: JOURNAL_FORMAT.into(), version: JOURNAL_VERSION })
            .expect("header serializes");
        writeln!(file, "{header}")?;
        file.flush()?;
        Ok(Journal { path: path.to_path_buf(), file })
    }

    /// Opens an existing journal for appending. A torn trailing line is cut
    /// off first so new records start on a fresh line.
    pub fn open_append(path: &Path) -> Result<Journal, JournalError> {
        let bytes = std::fs::read(path)?;
        if let Some(last_nl) = bytes.iter().rposition(|b| *b == b'\n') {
            if last_nl + 1 != bytes.len() {
                let f = OpenOptions::new().write(true).open(path)?;
                f.set_len(last_nl as u64 + 1)?;
            }
        }
        let file = OpenOptions::new().append(true).open(path)?;
        Ok(Journal { path: path.to_path_buf(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: &JournalRecord) -> Result<(), JournalError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Result of replaying a journal.
#[derive(Debug)]
pub struct Replay {
    pub tree: SolutionTree,
    pub records: Vec<JournalRecord>,
    pub warnings: Vec<String>,
    /// Jobs dispatched but never released (a crash mid-expansion).
    pub open_jobs: Vec<NodeId>,
}

fn corrupt(line: usize, reason: impl ToString) -> JournalError {
    JournalError::CorruptRecord { line, reason: reason.to_string() }
}

/// Rebuilds the tree from a journal file.
pub fn journal_replay(path: &Path) -> Result<Replay, JournalError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines: Vec<String> = Vec::new();
    let mut ends_with_newline = true;
    for line in reader.split(b'\n') {
        lines.push(String::from_utf8_lossy(&line?).into_owned());
    }
    if let Ok(meta) = std::fs::metadata(path) {
        if meta.len() > 0 {
            let mut f = File::open(path)?;
            f.seek(SeekFrom::End(-1))?;
            let mut b = [0u8; 1];
            f.read_exact(&mut b)?;
            ends_with_newline = b[0] == b'\n';
        }
    }
    if lines.is_empty() {
        return Err(JournalError::VersionMismatch { found: String::new() });
    }

    let header_line = lines.first().cloned().unwrap_or_default();
    match serde_json::from_str::<Header>(&header_line) {
        Ok(h) if h.format == JOURNAL_FORMAT && h.version == JOURNAL_VERSION => {}
        _ => return Err(JournalError::VersionMismatch { found: header_line }),
    }

    let mut tree = SolutionTree::new();
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut open: Vec<NodeId> = Vec::new();
    let last = lines.len() - 1;

    for (idx, text) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        if text.trim().is_empty() {
            continue;
        }
        let record: JournalRecord = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) if idx == last && !ends_with_newline => {
                warnings.push(format!("discarded partial trailing record at line {lineno}: {e}"));
                break;
            }
            Err(e) => return Err(corrupt(lineno, e)),
        };
        apply(&mut tree, &mut open, &record).map_err(|e| corrupt(lineno, e))?;
        records.push(record);
    }
    tree.in_flight.clear();
    Ok(Replay { tree, records, warnings, open_jobs: open })
}

fn apply(tree: &mut SolutionTree, open: &mut Vec<NodeId>, record: &JournalRecord) -> Result<(), TreeError> {
    match record {
        JournalRecord::Node { node } => tree.restore(node.clone()),
        JournalRecord::Dispatch { job, parent, .. } => {
            if let Some(p) = parent {
                tree.in_flight.insert(*p);
            }
            open.push(*job);
            Ok(())
        }
        JournalRecord::Release { job, parent, .. } => {
            if let Some(p) = parent {
                tree.in_flight.remove(p);
            }
            open.retain(|j| j != job);
            Ok(())
        }
        JournalRecord::Note { .. } => Ok(()),
    }
}

/// Peak number of simultaneously open jobs over a record stream.
pub fn peak_in_flight(records: &[JournalRecord]) -> usize {
    let (mut open, mut peak) = (0usize, 0usize);
    for r in records {
        match r {
            JournalRecord::Dispatch { .. } => {
                open += 1;
                peak = peak.max(open);
            }
            JournalRecord::Release { .. } => open = open.saturating_sub(1),
            _ => {}
        }
    }
    peak
}
