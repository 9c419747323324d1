use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::extraction::QueueEntry;
use super::{sha256_hex, write_json_atomic, AnnotationConfig, PipelineError};
use crate::eval::{cohen_kappa, KappaReport};

pub const INSTRUCTIONS: &str = "\
Decide whether the review raises a privacy concern: collection, use,
sharing, selling, leaking or tracking of personal data, missing consent,
or the inability to control or delete one's data.
  y = privacy-related   n = not privacy-related   s = skip   q = save and quit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanLabel {
    Privacy,
    NonPrivacy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub review_id: String,
    /// Lead first, then the second labeler.
    pub assigned: Vec<String>,
    pub labels: BTreeMap<String, HumanLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiebreaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiebreak_label: Option<HumanLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_label: Option<HumanLabel>,
}

impl AnnotationTask {
    fn primary(&self) -> Option<(HumanLabel, HumanLabel)> {
        Some((*self.labels.get(&self.assigned[0])?, *self.labels.get(&self.assigned[1])?))
    }

    pub fn disagrees(&self) -> bool {
        self.primary().is_some_and(|(a, b)| a != b)
    }

    fn settle(&mut self) {
        self.final_label = match self.primary() {
            Some((a, b)) if a == b => Some(a),
            Some(_) => self.tiebreak_label,
            None => None,
        };
    }
}

/// Persistent session state, tied to one queue by digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSession {
    pub queue_digest: String,
    pub lead: String,
    pub annotators: Vec<String>,
    pub tasks: Vec<AnnotationTask>,
}

impl AnnotationSession {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        serde_json::from_str(&s).map_err(|e| PipelineError::Annotation(format!("{}: {e}", path.display())))
    }
}

fn queue_digest(queue: &[QueueEntry]) -> String {
    let ids: Vec<&str> = queue.iter().map(|q| q.review.id.as_str()).collect();
    sha256_hex(ids.join("\n").as_bytes())
}

/// Lead labels everything; the others take every (n-1)-th review in turn.
pub fn plan_tasks(queue: &[QueueEntry], cfg: &AnnotationConfig) -> Vec<AnnotationTask> {
    let lead = cfg.lead();
    let others: Vec<&String> = cfg.annotators.iter().filter(|a| *a != lead).collect();
    queue
        .iter()
        .enumerate()
        .map(|(k, q)| AnnotationTask {
            review_id: q.review.id.clone(),
            assigned: vec![lead.to_string(), others[k % others.len()].clone()],
            labels: BTreeMap::new(),
            tiebreaker: None,
            tiebreak_label: None,
            final_label: None,
        })
        .collect()
}

fn tiebreaker_for(task: &AnnotationTask, cfg: &AnnotationConfig) -> Option<String> {
    if let Some(t) = &cfg.tiebreaker {
        return (!task.assigned.contains(t)).then(|| t.clone());
    }
    cfg.annotators.iter().find(|a| !task.assigned.contains(a)).cloned()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Answer {
    Label(HumanLabel),
    Skip,
    Quit,
}

impl Answer {
    pub fn parse(s: &str) -> Option<Answer> {
        match s.trim().to_lowercase().as_str() {
            "y" | "yes" | "1" => Some(Answer::Label(HumanLabel::Privacy)),
            "n" | "no" | "0" => Some(Answer::Label(HumanLabel::NonPrivacy)),
            "s" | "skip" | "" => Some(Answer::Skip),
            "q" | "quit" => Some(Answer::Quit),
            _ => None,
        }
    }
}

pub trait LabelSource {
    fn ask(&mut self, annotator: &str, entry: &QueueEntry, tiebreak: bool) -> std::io::Result<Answer>;
}

/// Interactive keyboard session.
pub struct TerminalSource<R, W> {
    input: R,
    output: W,
    current: Option<String>,
}

impl<R: BufRead, W: Write> TerminalSource<R, W> {
    pub fn new(input: R, output: W) -> Self {
        TerminalSource {
            input,
            output,
            current: None,
        }
    }
}

impl<R: BufRead, W: Write> LabelSource for TerminalSource<R, W> {
    fn ask(&mut self, annotator: &str, entry: &QueueEntry, tiebreak: bool) -> std::io::Result<Answer> {
        if self.current.as_deref() != Some(annotator) {
            writeln!(self.output, "\n== annotator {annotator} ==\n{INSTRUCTIONS}")?;
            self.current = Some(annotator.to_string());
        }
        let r = &entry.review;
        writeln!(
            self.output,
            "\n[{}{}] {} ({} stars)\n{}",
            r.id,
            if tiebreak { ", tiebreak" } else { "" },
            r.app_name,
            r.rating,
            r.text_raw
        )?;
        loop {
            write!(self.output, "y/n/s/q> ")?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Ok(Answer::Quit);
            }
            match Answer::parse(&line) {
                Some(a) => return Ok(a),
                None => writeln!(self.output, "please answer y, n, s or q")?,
            }
        }
    }
}

/// Canned answers keyed by annotator then review id; unscripted pairs skip.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptedSource(pub BTreeMap<String, BTreeMap<String, String>>);

impl ScriptedSource {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        serde_json::from_str(&s).map_err(|e| PipelineError::Annotation(format!("{}: {e}", path.display())))
    }
}

impl LabelSource for ScriptedSource {
    fn ask(&mut self, annotator: &str, entry: &QueueEntry, _tiebreak: bool) -> std::io::Result<Answer> {
        Ok(self
            .0
            .get(annotator)
            .and_then(|m| m.get(&entry.review.id))
            .and_then(|s| Answer::parse(s))
            .unwrap_or(Answer::Skip))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationOutcome {
    pub session: AnnotationSession,
    /// Lead versus second labeler over reviews both have labeled.
    pub kappa: Option<KappaReport>,
    pub tiebreaks: usize,
    /// Reviews without a final label.
    pub pending: Vec<String>,
    pub quit: bool,
}

impl AnnotationOutcome {
    pub fn complete(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn count(&self, label: HumanLabel) -> usize {
        self.session.tasks.iter().filter(|t| t.final_label == Some(label)).count()
    }

    pub fn confirmed_ids(&self) -> Vec<&str> {
        self.session
            .tasks
            .iter()
            .filter(|t| t.final_label == Some(HumanLabel::Privacy))
            .map(|t| t.review_id.as_str())
            .collect()
    }
}

/// Runs (or resumes) a labeling session over `queue`. State is saved to
/// `session_path` after every answer.
pub fn run_annotation(
    cfg: &AnnotationConfig,
    queue: &[QueueEntry],
    source: &mut dyn LabelSource,
    session_path: &Path,
) -> Result<AnnotationOutcome, PipelineError> {
    cfg.validate()?;
    if queue.is_empty() {
        return Err(PipelineError::Annotation("the annotation queue is empty".into()));
    }
    let digest = queue_digest(queue);
    let mut session = if session_path.exists() {
        let s = AnnotationSession::load(session_path)?;
        if s.queue_digest != digest {
            return Err(PipelineError::Annotation(format!(
                "{} belongs to a different queue",
                session_path.display()
            )));
        }
        if s.annotators != cfg.annotators || s.lead != cfg.lead() {
            return Err(PipelineError::Annotation("the roster changed since the session started".into()));
        }
        log::info!("resuming annotation session {}", session_path.display());
        s
    } else {
        AnnotationSession {
            queue_digest: digest,
            lead: cfg.lead().to_string(),
            annotators: cfg.annotators.clone(),
            tasks: plan_tasks(queue, cfg),
        }
    };

    let mut quit = false;
    'primary: for annotator in &cfg.annotators {
        for (i, entry) in queue.iter().enumerate() {
            let task = &session.tasks[i];
            if !task.assigned.contains(annotator) || task.labels.contains_key(annotator) {
                continue;
            }
            match source.ask(annotator, entry, false).map_err(PipelineError::io(session_path))? {
                Answer::Label(l) => {
                    let task = &mut session.tasks[i];
                    task.labels.insert(annotator.clone(), l);
                    task.settle();
                    write_json_atomic(session_path, &session)?;
                }
                Answer::Skip => {}
                Answer::Quit => {
                    quit = true;
                    break 'primary;
                }
            }
        }
    }
    if !quit {
        for i in 0..session.tasks.len() {
            let task = &mut session.tasks[i];
            if !task.disagrees() || task.tiebreak_label.is_some() {
                continue;
            }
            let Some(tb) = tiebreaker_for(task, cfg) else {
                return Err(PipelineError::Annotation(format!("no tiebreaker available for {}", task.review_id)));
            };
            task.tiebreaker = Some(tb.clone());
            match source.ask(&tb, &queue[i], true).map_err(PipelineError::io(session_path))? {
                Answer::Label(l) => {
                    task.tiebreak_label = Some(l);
                    task.settle();
                }
                Answer::Skip => {}
                Answer::Quit => {
                    write_json_atomic(session_path, &session)?;
                    quit = true;
                    break;
                }
            }
            write_json_atomic(session_path, &session)?;
        }
    }
    write_json_atomic(session_path, &session)?;

    let (a, b): (Vec<HumanLabel>, Vec<HumanLabel>) = session.tasks.iter().filter_map(AnnotationTask::primary).unzip();
    let kappa = if a.is_empty() { None } else { Some(cohen_kappa(&a, &b)?) };
    let tiebreaks = session.tasks.iter().filter(|t| t.disagrees()).count();
    let pending = session
        .tasks
        .iter()
        .filter(|t| t.final_label.is_none())
        .map(|t| t.review_id.clone())
        .collect();
    Ok(AnnotationOutcome {
        session,
        kappa,
        tiebreaks,
        pending,
        quit,
    })
}
