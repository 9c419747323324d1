use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{write_json_atomic, PipelineError};
use crate::llm::LlmBackendDescriptor;
use crate::nli::NliBackendDescriptor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub ingested: usize,
    pub rejected: usize,
    pub rating_filtered: usize,
    /// Gold-labeled reviews held out of extraction.
    pub excluded_labeled: usize,
    /// Reviews whose normalized text is empty.
    pub excluded_empty: usize,
    pub nli_scored: usize,
    pub maybe_privacy: usize,
    pub maybe_not_privacy: usize,
    pub undetermined: usize,
    pub llm_yes: usize,
    pub llm_no: usize,
    pub llm_failed: usize,
    pub human_confirmed: usize,
    pub human_rejected: usize,
    pub human_pending: usize,
}

impl StageCounts {
    /// Every violated conservation law, as a readable message.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |ok: bool, what: &str| {
            if !ok {
                v.push(what.to_string());
            }
        };
        check(self.rating_filtered <= self.ingested, "rating_filtered <= ingested");
        check(
            self.nli_scored + self.excluded_labeled + self.excluded_empty == self.rating_filtered,
            "nli_scored + excluded_labeled + excluded_empty == rating_filtered",
        );
        check(
            self.maybe_privacy + self.maybe_not_privacy + self.undetermined == self.nli_scored,
            "maybe_privacy + maybe_not_privacy + undetermined == nli_scored",
        );
        check(
            self.llm_yes + self.llm_no + self.llm_failed == self.maybe_privacy,
            "llm_yes + llm_no + llm_failed == maybe_privacy",
        );
        check(
            self.human_confirmed + self.human_rejected + self.human_pending == self.llm_yes,
            "human_confirmed + human_rejected + human_pending == llm_yes",
        );
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backends {
    pub nli: NliBackendDescriptor,
    pub llm: LlmBackendDescriptor,
}

/// Deterministic record of an extraction run. Wall-clock timings live in a
/// sidecar file so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_digest: String,
    pub corpus_digest: String,
    pub hypothesis_set: String,
    pub hypothesis_set_hash: String,
    pub prompt_version: String,
    pub prompt_digest: String,
    pub counts: StageCounts,
    pub backends: Backends,
    pub timings_file: String,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        write_json_atomic(path, self)
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        serde_json::from_str(&s).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

/// Per-stage wall-clock seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub stages: Vec<(String, f64)>,
}

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages.push((stage.to_string(), t.elapsed().as_secs_f64()));
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        write_json_atomic(path, self)
    }
}
