//! Line-delimited JSON event log.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StoreError;
use crate::nlp::ReportClassification;
use crate::pipeline::StudyResult;
use crate::study::StudyRecord;
use crate::triage::{AdjudicationRecord, TriageDecision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriagePayload {
    pub decision: TriageDecision,
    pub nlp: ReportClassification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Event {
    Ingest(StudyRecord),
    Result(StudyResult),
    Triage(TriagePayload),
    Adjudication(AdjudicationRecord),
}

impl Event {
    pub fn study_id(&self) -> &str {
        match self {
            Event::Ingest(r) => &r.study_id,
            Event::Result(r) => &r.study_id,
            Event::Triage(t) => &t.decision.study_id,
            Event::Adjudication(a) => &a.study_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLogEntry {
    pub seq: u64,
    /// UTC seconds at append time.
    pub timestamp: i64,
    #[serde(flatten)]
    pub event: Event,
}

/// Parse log bytes. A final line without a newline is a torn write and is
/// dropped; the returned length is the byte count of the intact prefix.
pub fn parse_entries(bytes: &[u8]) -> Result<(Vec<EventLogEntry>, usize), StoreError> {
    let mut entries = Vec::new();
    let mut pos = 0;
    let mut line_no = 0;
    while let Some(nl) = bytes[pos..].iter().position(|&b| b == b'\n') {
        line_no += 1;
        let line = &bytes[pos..pos + nl];
        pos += nl + 1;
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let entry: EventLogEntry = serde_json::from_slice(line)
            .map_err(|e| StoreError::CorruptLog { line: line_no, message: e.to_string() })?;
        if let Some(prev) = entries.last().map(|e: &EventLogEntry| e.seq) {
            if entry.seq <= prev {
                return Err(StoreError::CorruptLog {
                    line: line_no,
                    message: format!("seq {} does not follow {}", entry.seq, prev),
                });
            }
        }
        entries.push(entry);
    }
    Ok((entries, pos))
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Open (creating if needed) and read back all intact entries. A torn
    /// tail is cut off so later appends start on a clean line.
    pub fn open(path: &Path) -> Result<(Self, Vec<EventLogEntry>), StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let (entries, valid) = parse_entries(&bytes)?;
        if valid < bytes.len() {
            log::warn!("{}: dropping {} bytes of torn tail", path.display(), bytes.len() - valid);
            file.set_len(valid as u64)?;
        }
        Ok((Self { path: path.to_path_buf(), file }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, entries: &[EventLogEntry]) -> Result<(), StoreError> {
        if entries.is_empty() {
            return Ok(());
        }
        let mut buf = Vec::new();
        for e in entries {
            serde_json::to_writer(&mut buf, e).map_err(std::io::Error::from)?;
            buf.push(b'\n');
        }
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }

    pub fn sync(&mut self) -> Result<(), StoreError> {
        self.file.sync_all()?;
        Ok(())
    }
}
