use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::annotation::{AnnotationTask, HumanLabel};
use super::extraction::QueueEntry;
use super::PipelineError;
use crate::llm::BinaryLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "jsonl" | "ndjson" => Ok(ExportFormat::Jsonl),
            other => Err(format!("unknown export format {other:?} (csv or jsonl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliTrace {
    pub fired_rule: Option<usize>,
    /// Hypothesis ids and scores above the firing threshold.
    pub triggered: Vec<(u32, f32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTrace {
    pub yes: usize,
    pub no: usize,
    pub abstain: usize,
    pub decision: BinaryLabel,
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanTrace {
    pub labels: BTreeMap<String, HumanLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiebreak: Option<(String, HumanLabel)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub nli: NliTrace,
    pub llm: VoteTrace,
    pub annotators: HumanTrace,
}

/// One exported review: the original record, its final label and how it
/// got there.
#[derive(Debug, Clone, PartialEq)]
pub struct ExportRow {
    pub entry: QueueEntry,
    pub label: HumanLabel,
    pub provenance: Provenance,
}

impl ExportRow {
    pub fn new(entry: &QueueEntry, task: &AnnotationTask) -> Option<Self> {
        let label = task.final_label?;
        let (yes, no, abstain) = entry.vote.tally();
        let provenance = Provenance {
            nli: NliTrace {
                fired_rule: entry.fired_rule,
                triggered: entry.triggered.clone(),
            },
            llm: VoteTrace {
                yes,
                no,
                abstain,
                decision: entry.vote.decision,
                tie: entry.vote.tie_flag,
            },
            annotators: HumanTrace {
                labels: task.labels.clone(),
                tiebreak: task.tiebreaker.clone().zip(task.tiebreak_label),
            },
        };
        Some(ExportRow {
            entry: entry.clone(),
            label,
            provenance,
        })
    }
}

#[derive(Serialize)]
struct OutRecord<'a, P> {
    id: &'a str,
    app: &'a str,
    store: &'a str,
    rating: u8,
    text: &'a str,
    label: u8,
    date: Option<String>,
    provenance: P,
}

fn record<P>(row: &ExportRow, provenance: P) -> OutRecord<'_, P> {
    let r = &row.entry.review;
    OutRecord {
        id: &r.id,
        app: &r.app_name,
        store: r.store.as_str(),
        rating: r.rating,
        text: &r.text_raw,
        label: u8::from(row.label == HumanLabel::Privacy),
        date: r.submitted_at.map(|d| d.to_string()),
        provenance,
    }
}

const HEADER: [&str; 8] = ["id", "app", "store", "rating", "text", "label", "date", "provenance"];

/// Writes `rows` in the ingestion schema plus a `provenance` column, so the
/// file can be read back with the corpus loader.
pub fn export_dataset(rows: &[ExportRow], format: ExportFormat, path: &Path) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
    }
    let file = File::create(path).map_err(PipelineError::io(path))?;
    let csv_err = |e: csv::Error| PipelineError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(HEADER).map_err(csv_err)?;
            for row in rows {
                let prov = serde_json::to_string(&row.provenance).expect("provenance serializes");
                w.serialize(record(row, prov)).map_err(csv_err)?;
            }
            w.flush().map_err(PipelineError::io(path))
        }
        ExportFormat::Jsonl => {
            let mut w = BufWriter::new(file);
            for row in rows {
                serde_json::to_writer(&mut w, &record(row, &row.provenance)).expect("record serializes");
                w.write_all(b"\n").map_err(PipelineError::io(path))?;
            }
            w.flush().map_err(PipelineError::io(path))
        }
    }
}
