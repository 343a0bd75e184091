//! Append-only JSONL audit log, one record per completion attempt.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::BackendError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub ts_ms: u64,
    pub fingerprint: String,
    pub model: String,
    pub attempt: u32,
    pub latency_ms: u64,
    pub outcome: String,
    pub truncated: bool,
}

pub struct AuditLog {
    writer: Mutex<BufWriter<File>>,
}

impl AuditLog {
    pub fn open(path: &Path) -> Result<AuditLog, BackendError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| BackendError::Io { path: path.display().to_string(), source: e })?;
        Ok(AuditLog { writer: Mutex::new(BufWriter::new(file)) })
    }

    pub fn record(&self, entry: AuditEntry) {
        let mut writer = self.writer.lock().unwrap();
        // An unwritable audit line must not fail the request itself.
        if serde_json::to_writer(&mut *writer, &entry).is_ok() {
            let _ = writer.write_all(b"\n");
            let _ = writer.flush();
        }
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
