//! Append-only JSON-lines event log.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Engine;
use crate::schema::CompatibilityMode;
use crate::stl::validate::Diagnostic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SchemaRegistered {
        id: u32,
        subject: String,
        version: u32,
        fingerprint: u64,
        document: String,
    },
    MappingCreated {
        source_id: u32,
        target_id: u32,
        engine: Engine,
        program: String,
        diagnostics: Vec<Diagnostic>,
    },
    MappingDecided {
        source_id: u32,
        target_id: u32,
        decision: Decision,
    },
    ConfigChanged {
        subject: String,
        mode: CompatibilityMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log i/o: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt log at line {line}: {detail}")]
    Corrupt { line: usize, detail: String },
}

/// Parses log bytes. Returns the entries and the length of the durable
/// prefix; an unterminated final line is a torn write and is dropped.
pub fn parse_log(bytes: &[u8]) -> Result<(Vec<LogEntry>, usize), LogError> {
    let durable = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    let text = std::str::from_utf8(&bytes[..durable]).map_err(|e| LogError::Corrupt {
        line: 0,
        detail: e.to_string(),
    })?;
    let mut entries: Vec<LogEntry> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |detail: String| LogError::Corrupt { line: i + 1, detail };
        let entry: LogEntry = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
        if let Some(prev) = entries.last() {
            if entry.seq <= prev.seq {
                return Err(corrupt(format!("sequence {} does not follow {}", entry.seq, prev.seq)));
            }
        }
        entries.push(entry);
    }
    Ok((entries, durable))
}

/// The log sink. `Memory` keeps nothing and is used for ephemeral registries.
pub enum StoreLog {
    Memory,
    File(File),
}

impl StoreLog {
    /// Opens (creating if needed) a log file, truncating any torn tail, and
    /// returns the entries already present.
    pub fn open(path: &Path) -> Result<(StoreLog, Vec<LogEntry>), LogError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (entries, durable) = parse_log(&bytes)?;
        if durable < bytes.len() {
            file.set_len(durable as u64)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok((StoreLog::File(file), entries))
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), LogError> {
        if let StoreLog::File(f) = self {
            let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
            line.push('\n');
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        Ok(())
    }
}
