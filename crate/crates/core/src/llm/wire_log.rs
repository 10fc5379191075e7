//! JSON-lines log of HTTP request and response bodies.
//!
//! Local-role bodies carry patient values, so every digit is masked before
//! writing. Remote-role bodies were built from metadata only and are kept
//! verbatim.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::json;

use super::{CallKey, Role};

#[derive(Clone)]
pub struct WireLog {
    writer: Arc<Mutex<BufWriter<File>>>,
}

impl WireLog {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(WireLog {
            writer: Arc::new(Mutex::new(BufWriter::new(file))),
        })
    }

    pub fn record(&self, role: Role, key: &CallKey, request: &str, response: &str) {
        let (request, response) = match role {
            Role::Local => (redact(request), redact(response)),
            Role::Remote => (request.to_string(), response.to_string()),
        };
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0);
        let line = json!({
            "timestamp_ms": ts,
            "role": role,
            "stage": key.stage.as_str(),
            "round": key.round,
            "agent": key.agent.map(|a| a.as_str()),
            "attempt": key.attempt,
            "request": request,
            "response": response,
        });
        let mut w = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if writeln!(w, "{line}").and_then(|_| w.flush()).is_err() {
            tracing::warn!("wire log write failed");
        }
    }
}

/// Replaces every ASCII digit with `#`.
pub fn redact(body: &str) -> String {
    body.chars().map(|c| if c.is_ascii_digit() { '#' } else { c }).collect()
}
