//! Append-only JSONL event log. Project state is a fold over its events.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use loopwright_core::{AnnotationEvent, FinalLabelRecord, JudgeCase, PromptMode, RoutingDecision, Timestamp, TripleRun};

pub const LOG_FORMAT: &str = "loopwright/events";
pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub schema_version: u32,
    pub project_seed: u64,
}

impl LogHeader {
    pub fn new(project_seed: u64) -> Self {
        Self { format: LOG_FORMAT.into(), schema_version: LOG_SCHEMA_VERSION, project_seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// Binds the project to one model and prompt mode.
    RunStarted { model: String, prompt_mode: PromptMode },
    /// First-annotator label for the gold track.
    Human { annotation: AnnotationEvent },
    Triple { run: TripleRun, at: Timestamp },
    /// Sampling failed for a claim; a later run may retry it.
    Failed { claim_id: String, model: String, error: String, at: Timestamp },
    Routed { claim_id: String, decision: RoutingDecision },
    JudgeCaseOpened { case: JudgeCase },
    Judge { annotation: AnnotationEvent },
    Final { record: FinalLabelRecord },
    /// One vote of the fully human track.
    Platinum { annotation: AnnotationEvent },
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}: missing or unreadable log header")]
    MissingHeader(PathBuf),
    /// `position` is the 1-based line that failed; the first `valid_bytes`
    /// bytes hold `valid_events` well-formed events.
    #[error("corrupt event log at line {position}: {message} ({valid_events} events recoverable)")]
    CorruptLog { position: usize, valid_bytes: u64, valid_events: usize, message: String },
}

pub struct EventLog {
    path: PathBuf,
    file: File,
    header: LogHeader,
}

impl EventLog {
    /// Starts a new log; fails if the file exists.
    pub fn create(path: &Path, header: LogHeader) -> Result<Self, LogError> {
        let io = |source| LogError::Io { path: path.to_path_buf(), source };
        let mut file = OpenOptions::new().write(true).create_new(true).open(path).map_err(io)?;
        let mut line = serde_json::to_string(&header).expect("header serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io)?;
        file.sync_data().map_err(io)?;
        Ok(Self { path: path.to_path_buf(), file, header })
    }

    /// Reads the whole log and reopens it for appending.
    pub fn open(path: &Path) -> Result<(Self, Vec<Event>), LogError> {
        let (header, events) = read(path)?;
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
        Ok((Self { path: path.to_path_buf(), file, header }, events))
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes all events in one call and syncs.
    pub fn append(&mut self, events: &[Event]) -> Result<(), LogError> {
        if events.is_empty() {
            return Ok(());
        }
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("events serialize"));
            buf.push('\n');
        }
        let io = |source| LogError::Io { path: self.path.clone(), source };
        self.file.write_all(buf.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

pub fn read(path: &Path) -> Result<(LogHeader, Vec<Event>), LogError> {
    let bytes = std::fs::read(path).map_err(|source| LogError::Io { path: path.to_path_buf(), source })?;
    let mut offset = 0usize;
    let mut header: Option<LogHeader> = None;
    let mut events = Vec::new();
    for (i, raw) in bytes.split_inclusive(|b| *b == b'\n').enumerate() {
        let complete = raw.ends_with(b"\n");
        let text = std::str::from_utf8(raw).map(str::trim);
        let corrupt = |message: String| LogError::CorruptLog {
            position: i + 1,
            valid_bytes: offset as u64,
            valid_events: events.len(),
            message,
        };
        let text = match text {
            Ok(t) => t,
            Err(e) => return Err(corrupt(e.to_string())),
        };
        if text.is_empty() {
            offset += raw.len();
            continue;
        }
        if !complete {
            return Err(corrupt("truncated final line".into()));
        }
        if header.is_none() {
            match serde_json::from_str::<LogHeader>(text) {
                Ok(h) if h.format == LOG_FORMAT => header = Some(h),
                _ => return Err(LogError::MissingHeader(path.to_path_buf())),
            }
        } else {
            match serde_json::from_str::<Event>(text) {
                Ok(e) => events.push(e),
                Err(e) => return Err(corrupt(e.to_string())),
            }
        }
        offset += raw.len();
    }
    let header = header.ok_or_else(|| LogError::MissingHeader(path.to_path_buf()))?;
    Ok((header, events))
}

/// Cuts a corrupt log back to its valid prefix. Returns the number of
/// bytes removed (0 when the log was already valid).
pub fn repair(path: &Path) -> Result<u64, LogError> {
    match read(path) {
        Ok(_) => Ok(0),
        Err(LogError::CorruptLog { valid_bytes, .. }) => {
            let io = |source| LogError::Io { path: path.to_path_buf(), source };
            let file = OpenOptions::new().write(true).open(path).map_err(io)?;
            let len = file.metadata().map_err(io)?.len();
            file.set_len(valid_bytes).map_err(io)?;
            file.sync_data().map_err(io)?;
            Ok(len - valid_bytes)
        }
        Err(e) => Err(e),
    }
}
