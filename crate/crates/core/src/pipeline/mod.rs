//! Orchestration: model/hypothesis selection, the extraction run, the
//! human annotation session and dataset export.

mod annotation;
mod config;
mod export;
mod extraction;
mod manifest;
mod selection;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::eval::EvalError;
use crate::hypotheses::HypothesisError;
use crate::llm::LlmError;
use crate::nli::NliError;

pub use annotation::{
    plan_tasks, run_annotation, Answer, AnnotationOutcome, AnnotationSession, AnnotationTask, HumanLabel,
    LabelSource, ScriptedSource, TerminalSource, INSTRUCTIONS,
};
pub use config::{
    AnnotationConfig, CliOverrides, CorpusConfig, HypothesesConfig, Inline, LlmConfig, NliBackendConfig, NliConfig,
    PipelineConfig,
};
pub use export::{export_dataset, ExportFormat, ExportRow, Provenance};
pub use extraction::{read_queue, run_extraction, ExtractionOutcome, QueueEntry, MANIFEST_FILE, QUEUE_FILE, TIMINGS_FILE};
pub use manifest::{RunManifest, StageCounts, Timings};
pub use selection::{run_selection, SelectionOutcome};

/// Process exit codes used by the CLI.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const BACKEND: i32 = 3;
    pub const CHECKPOINT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Hypothesis(#[from] HypothesisError),
    #[error(transparent)]
    Nli(#[from] NliError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("annotation: {0}")]
    Annotation(String),
    #[error("annotation session saved with {pending} reviews still unlabeled")]
    Incomplete { pending: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Corpus(_)
            | PipelineError::Hypothesis(_)
            | PipelineError::Eval(_)
            | PipelineError::Annotation(_) => exit::VALIDATION,
            PipelineError::Nli(NliError::Backend { .. }) => exit::CHECKPOINT,
            PipelineError::Nli(NliError::Call(_)) => exit::BACKEND,
            PipelineError::Nli(NliError::Io { .. } | NliError::Corrupt { .. }) => exit::FAILURE,
            PipelineError::Nli(_) => exit::VALIDATION,
            PipelineError::Llm(LlmError::Backend { .. }) => exit::BACKEND,
            PipelineError::Llm(LlmError::Io { .. } | LlmError::Corrupt { .. }) => exit::FAILURE,
            PipelineError::Llm(_) => exit::VALIDATION,
            PipelineError::Incomplete { .. } => exit::CHECKPOINT,
            PipelineError::Io { .. } => exit::FAILURE,
        }
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes via a sibling temp file and rename so readers never see a
/// partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(PipelineError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(PipelineError::io(path))
}

pub(crate) fn write_json_atomic<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnnotationReport {
    pub reviews: usize,
    pub confirmed: usize,
    pub rejected: usize,
    pub pending: Vec<String>,
    pub tiebreaks: usize,
    pub kappa: Option<crate::eval::KappaReport>,
}

impl PipelineConfig {
    fn annotation(&self) -> Result<&AnnotationConfig, PipelineError> {
        self.annotation
            .as_ref()
            .ok_or_else(|| PipelineError::Config("no `annotation` roster configured".into()))
    }

    pub fn session_path(&self) -> Result<PathBuf, PipelineError> {
        Ok(match &self.annotation()?.session {
            Some(p) => self.resolve_path(p),
            None => self.output_dir().join("annotation_session.json"),
        })
    }

    /// The scripted label source named in the config, if any.
    pub fn scripted_source(&self) -> Result<Option<ScriptedSource>, PipelineError> {
        self.annotation()?
            .script
            .as_ref()
            .map(|p| ScriptedSource::load(&self.resolve_path(p)))
            .transpose()
    }
}

/// Runs the annotation session over the extraction queue in the output
/// directory, writes `annotation.json` and folds the human counts into the
/// run manifest.
pub fn annotate_run(cfg: &PipelineConfig, source: &mut dyn LabelSource) -> Result<AnnotationOutcome, PipelineError> {
    let out = cfg.output_dir();
    let queue = read_queue(&out.join(extraction::QUEUE_FILE))?;
    let outcome = run_annotation(cfg.annotation()?, &queue, source, &cfg.session_path()?)?;
    let report = AnnotationReport {
        reviews: queue.len(),
        confirmed: outcome.count(HumanLabel::Privacy),
        rejected: outcome.count(HumanLabel::NonPrivacy),
        pending: outcome.pending.clone(),
        tiebreaks: outcome.tiebreaks,
        kappa: outcome.kappa.clone(),
    };
    write_json_atomic(&out.join("annotation.json"), &report)?;
    let manifest_path = out.join(extraction::MANIFEST_FILE);
    if manifest_path.exists() {
        let mut m = RunManifest::read(&manifest_path)?;
        m.counts.human_confirmed = report.confirmed;
        m.counts.human_rejected = report.rejected;
        m.counts.human_pending = m.counts.llm_yes.saturating_sub(report.confirmed + report.rejected);
        m.write(&manifest_path)?;
    }
    Ok(outcome)
}

/// Exports the human-confirmed privacy reviews of a finished session.
pub fn export_run(cfg: &PipelineConfig, format: ExportFormat, path: &Path) -> Result<usize, PipelineError> {
    let out = cfg.output_dir();
    let queue = read_queue(&out.join(extraction::QUEUE_FILE))?;
    if queue.is_empty() {
        export_dataset(&[], format, path)?;
        return Ok(0);
    }
    let session_path = cfg.session_path()?;
    let session = AnnotationSession::load(&session_path)?;
    let pending = session.tasks.iter().filter(|t| t.final_label.is_none()).count();
    if pending > 0 {
        return Err(PipelineError::Incomplete { pending });
    }
    let tasks: std::collections::HashMap<&str, &AnnotationTask> =
        session.tasks.iter().map(|t| (t.review_id.as_str(), t)).collect();
    let rows: Vec<ExportRow> = queue
        .iter()
        .filter_map(|e| tasks.get(e.review.id.as_str()).and_then(|t| ExportRow::new(e, t)))
        .filter(|r| r.label == HumanLabel::Privacy)
        .collect();
    export_dataset(&rows, format, path)?;
    Ok(rows.len())
}
