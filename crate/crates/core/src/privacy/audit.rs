//! Append-only JSON-lines audit log of remote-bound traffic.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::ScanResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    ToRemote,
    ToLocal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp_ms: u64,
    pub direction: Direction,
    /// sha256 of the exact bytes handed to the backend.
    pub payload_digest: String,
    pub scan_result: ScanResult,
    /// Whether the bytes were actually sent.
    pub sent: bool,
    pub sample_id: String,
    pub config_digest: String,
}

enum Sink {
    File(BufWriter<File>),
    Memory(Vec<AuditEntry>),
}

/// Cloneable handle; all clones write through one serialized writer.
#[derive(Clone)]
pub struct AuditLog {
    sink: Arc<Mutex<Sink>>,
    config_digest: String,
}

impl AuditLog {
    pub fn open(path: &Path, config_digest: &str) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog {
            sink: Arc::new(Mutex::new(Sink::File(BufWriter::new(file)))),
            config_digest: config_digest.to_string(),
        })
    }

    pub fn in_memory(config_digest: &str) -> Self {
        AuditLog {
            sink: Arc::new(Mutex::new(Sink::Memory(Vec::new()))),
            config_digest: config_digest.to_string(),
        }
    }

    pub fn record(
        &self,
        direction: Direction,
        payload_digest: String,
        scan_result: ScanResult,
        sent: bool,
        sample_id: &str,
    ) -> std::io::Result<()> {
        let entry = AuditEntry {
            timestamp_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
            direction,
            payload_digest,
            scan_result,
            sent,
            sample_id: sample_id.to_string(),
            config_digest: self.config_digest.clone(),
        };
        let mut sink = self.sink.lock().unwrap_or_else(|e| e.into_inner());
        match &mut *sink {
            Sink::File(w) => {
                let line = serde_json::to_string(&entry).expect("entry serializes");
                writeln!(w, "{line}")?;
                w.flush()
            }
            Sink::Memory(v) => {
                v.push(entry);
                Ok(())
            }
        }
    }

    /// Entries of an in-memory log; empty for file-backed logs.
    pub fn entries(&self) -> Vec<AuditEntry> {
        match &*self.sink.lock().unwrap_or_else(|e| e.into_inner()) {
            Sink::Memory(v) => v.clone(),
            Sink::File(_) => Vec::new(),
        }
    }

    pub fn read(path: &Path) -> std::io::Result<Vec<AuditEntry>> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
            .collect()
    }
}
