use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatRequest, LlmBackend, LlmBackendDescriptor, LlmError, SampleContext};
use crate::backend::BackendError;

/// A scripted response that makes the mock fail the request.
pub const ERROR_RESPONSE: &str = "__error__";

/// Canned responses per review id. Sample `i` gets entry `i % len`. The
/// `"*"` key supplies responses for unscripted reviews; without it they get `"no"`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MockLlmScript(BTreeMap<String, Vec<String>>);

impl MockLlmScript {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Self {
        MockLlmScript(entries)
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let s = std::fs::read_to_string(path).map_err(LlmError::io(path))?;
        serde_json::from_str(&s).map_err(|e| LlmError::Corrupt {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn insert(&mut self, review_id: impl Into<String>, responses: Vec<String>) {
        self.0.insert(review_id.into(), responses);
    }

    pub fn response(&self, review_id: &str, sample: usize) -> &str {
        match self.0.get(review_id).or_else(|| self.0.get("*")) {
            Some(list) if !list.is_empty() => &list[sample % list.len()],
            _ => "no",
        }
    }
}

pub struct MockLlmBackend {
    desc: LlmBackendDescriptor,
    script: MockLlmScript,
    calls: AtomicUsize,
    last: Mutex<Option<ChatRequest>>,
}

impl MockLlmBackend {
    pub fn new(desc: LlmBackendDescriptor, script: MockLlmScript) -> Self {
        MockLlmBackend {
            desc,
            script,
            calls: AtomicUsize::new(0),
            last: Mutex::new(None),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn last_request(&self) -> Option<ChatRequest> {
        self.last.lock().expect("mock poisoned").clone()
    }
}

impl LlmBackend for MockLlmBackend {
    fn descriptor(&self) -> &LlmBackendDescriptor {
        &self.desc
    }

    fn complete(&self, request: &ChatRequest, ctx: SampleContext<'_>) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self.last.lock().expect("mock poisoned") = Some(request.clone());
        match self.script.response(ctx.review_id, ctx.sample) {
            ERROR_RESPONSE => Err(BackendError::Transient(format!(
                "scripted failure for {}",
                ctx.review_id
            ))),
            r => Ok(r.to_string()),
        }
    }
}
