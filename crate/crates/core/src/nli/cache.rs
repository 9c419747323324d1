use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EntailmentScore, NliBackendDescriptor, NliError};
use crate::hypotheses::HypothesisSet;

const FLUSH_EVERY: usize = 256;

/// The part of the cache key shared by every cell of one scoring run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheContext {
    pub backend: String,
    pub model: String,
    pub set_hash: String,
}

impl CacheContext {
    pub fn new(desc: &NliBackendDescriptor, set: &HypothesisSet) -> Self {
        CacheContext {
            backend: desc.name.clone(),
            model: desc.model.clone(),
            set_hash: set.version_hash().to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Line {
    backend: String,
    model: String,
    set_hash: String,
    review_id: String,
    hypothesis_id: u32,
    #[serde(flatten)]
    score: EntailmentScore,
}

struct Writer {
    out: BufWriter<File>,
    pending: usize,
}

/// Append-only JSONL store of entailment scores.
///
/// Lines for other contexts are kept on disk but not loaded. Appends go
/// through one mutex-guarded writer.
pub struct ScoreCache {
    path: PathBuf,
    ctx: CacheContext,
    entries: HashMap<(String, u32), EntailmentScore>,
    writer: Mutex<Writer>,
}

impl ScoreCache {
    pub fn open(path: &Path, ctx: CacheContext) -> Result<Self, NliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(NliError::io(dir))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(NliError::io(path))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(NliError::io(path))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Line>(&line) {
                    Ok(l) => {
                        if l.backend == ctx.backend && l.model == ctx.model && l.set_hash == ctx.set_hash {
                            entries.insert((l.review_id, l.hypothesis_id), l.score);
                        }
                    }
                    // A torn final line from an interrupted run.
                    Err(e) => log::warn!("{}:{}: skipping cache line: {e}", path.display(), i + 1),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(NliError::io(path))?;
        if !ends_with_newline(path).map_err(NliError::io(path))? {
            file.write_all(b"\n").map_err(NliError::io(path))?;
        }
        Ok(ScoreCache {
            path: path.to_path_buf(),
            ctx,
            entries,
            writer: Mutex::new(Writer {
                out: BufWriter::new(file),
                pending: 0,
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, review_id: &str, hypothesis_id: u32) -> Option<EntailmentScore> {
        self.entries.get(&(review_id.to_string(), hypothesis_id)).copied()
    }

    pub fn append(&self, review_id: &str, hypothesis_id: u32, score: &EntailmentScore) -> Result<(), NliError> {
        let line = Line {
            backend: self.ctx.backend.clone(),
            model: self.ctx.model.clone(),
            set_hash: self.ctx.set_hash.clone(),
            review_id: review_id.to_string(),
            hypothesis_id,
            score: *score,
        };
        let mut buf = serde_json::to_vec(&line).expect("cache line serializes");
        buf.push(b'\n');
        let mut w = self.writer.lock().expect("cache writer poisoned");
        w.out.write_all(&buf).map_err(NliError::io(&self.path))?;
        w.pending += 1;
        if w.pending >= FLUSH_EVERY {
            w.out.flush().map_err(NliError::io(&self.path))?;
            w.pending = 0;
        }
        Ok(())
    }

    pub fn flush(&self) -> Result<(), NliError> {
        let mut w = self.writer.lock().expect("cache writer poisoned");
        w.pending = 0;
        w.out.flush().map_err(NliError::io(&self.path))
    }
}

/// True for empty files too.
fn ends_with_newline(path: &Path) -> std::io::Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut f = File::open(path)?;
    if f.metadata()?.len() == 0 {
        return Ok(true);
    }
    f.seek(SeekFrom::End(-1))?;
    let mut last = [0u8; 1];
    f.read_exact(&mut last)?;
    Ok(last[0] == b'\n')
}

impl Drop for ScoreCache {
    fn drop(&mut self) {
        if let Ok(w) = self.writer.get_mut() {
            let _ = w.out.flush();
        }
    }
}
