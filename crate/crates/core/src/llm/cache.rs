use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LlmBackendDescriptor, LlmError, SamplingSettings, VoteRecord};

#[derive(Serialize, Deserialize)]
struct Line {
    context: String,
    record: VoteRecord,
}

/// Append-only JSONL of finished vote records, keyed by review id within a
/// context (backend, model, system message, sampling settings).
pub struct VoteCache {
    path: PathBuf,
    context: String,
    entries: HashMap<String, VoteRecord>,
    writer: Mutex<BufWriter<File>>,
}

impl VoteCache {
    pub fn context_key(desc: &LlmBackendDescriptor, system_message: &str, settings: &SamplingSettings) -> String {
        let mut h = Sha256::new();
        for part in [desc.name.as_str(), desc.model.as_str(), system_message] {
            h.update(part.as_bytes());
            h.update([0]);
        }
        h.update(serde_json::to_vec(settings).expect("settings serialize"));
        h.finalize()[..12].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn open(path: &Path, context: String) -> Result<Self, LlmError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(LlmError::io(dir))?;
        }
        let mut entries = HashMap::new();
        let mut needs_newline = false;
        if path.exists() {
            let raw = std::fs::read(path).map_err(LlmError::io(path))?;
            needs_newline = raw.last().is_some_and(|&b| b != b'\n');
            for (i, line) in BufReader::new(raw.as_slice()).lines().enumerate() {
                let line = line.map_err(LlmError::io(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Line>(&line) {
                    Ok(l) if l.context == context => {
                        entries.insert(l.record.review_id.clone(), l.record);
                    }
                    Ok(_) => {}
                    Err(e) => log::warn!("{}:{}: skipping vote cache line: {e}", path.display(), i + 1),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(LlmError::io(path))?;
        if needs_newline {
            file.write_all(b"\n").map_err(LlmError::io(path))?;
        }
        Ok(VoteCache {
            path: path.to_path_buf(),
            context,
            entries,
            writer: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, review_id: &str) -> Option<VoteRecord> {
        self.entries.get(review_id).cloned()
    }

    pub fn append(&self, record: &VoteRecord) -> Result<(), LlmError> {
        let line = Line {
            context: self.context.clone(),
            record: record.clone(),
        };
        let mut buf = serde_json::to_vec(&line).expect("vote line serializes");
        buf.push(b'\n');
        let mut w = self.writer.lock().expect("vote cache writer poisoned");
        w.write_all(&buf).map_err(LlmError::io(&self.path))?;
        // Records are few and expensive; persist each one.
        w.flush().map_err(LlmError::io(&self.path))
    }

    pub fn flush(&self) -> Result<(), LlmError> {
        self.writer
            .lock()
            .expect("vote cache writer poisoned")
            .flush()
            .map_err(LlmError::io(&self.path))
    }
}
