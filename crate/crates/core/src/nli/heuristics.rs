use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EntailmentMatrix, NliError};
use crate::hypotheses::{HeuristicRuleSet, PseudoLabel};

/// `true`: a score counts toward `N_E(t)` only when strictly greater than `t`.
/// Flip to count scores equal to the threshold as well.
pub const STRICT_THRESHOLD: bool = true;

#[inline]
fn above(score: f32, threshold: f32) -> bool {
    if STRICT_THRESHOLD {
        score > threshold
    } else {
        score >= threshold
    }
}

/// `N_E(t)`: number of hypotheses whose entailment score exceeds `t`.
///
/// The comparison happens in `f32`, the precision scores are stored at, so a
/// stored 0.8 is not above a 0.8 threshold.
pub fn n_above(row: &[f32], t: f64) -> usize {
    let t = t as f32;
    row.iter().filter(|&&s| above(s, t)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowOutcome {
    pub label: PseudoLabel,
    /// Index of the first positive rule satisfied, if any.
    pub fired_rule: Option<usize>,
}

impl HeuristicRuleSet {
    pub fn label_row(&self, row: &[f32]) -> RowOutcome {
        if let Some(i) = self
            .positive_rules
            .iter()
            .position(|r| n_above(row, r.threshold) >= r.min_count)
        {
            return RowOutcome {
                label: PseudoLabel::MaybePrivacy,
                fired_rule: Some(i),
            };
        }
        let label = match self.negative_rule {
            Some(neg) if n_above(row, neg.threshold) == 0 => PseudoLabel::MaybeNotPrivacy,
            _ => self.default_label,
        };
        RowOutcome {
            label,
            fired_rule: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeled {
    pub review_id: String,
    pub label: PseudoLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fired_rule: Option<usize>,
    /// Hypotheses above the fired rule's threshold, with their scores.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub triggered: Vec<(u32, f32)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeling {
    pub set_hash: String,
    pub entries: Vec<PseudoLabeled>,
}

impl PseudoLabeling {
    pub fn count(&self, label: PseudoLabel) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    pub fn labels(&self) -> Vec<PseudoLabel> {
        self.entries.iter().map(|e| e.label).collect()
    }

    pub fn get(&self, review_id: &str) -> Option<&PseudoLabeled> {
        self.entries.iter().find(|e| e.review_id == review_id)
    }

    pub fn maybe_privacy_ids(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.label == PseudoLabel::MaybePrivacy)
            .map(|e| e.review_id.as_str())
            .collect()
    }
}

/// Assigns exactly one pseudo-label per matrix row.
pub fn apply_heuristics(matrix: &EntailmentMatrix, rules: &HeuristicRuleSet) -> Result<PseudoLabeling, NliError> {
    let width = matrix.n_hypotheses();
    rules
        .validate(width)
        .map_err(|e| NliError::Dimension(format!("rules do not fit a {width}-hypothesis matrix: {e}")))?;
    let entries = matrix
        .rows()
        .map(|(id, row)| {
            let out = rules.label_row(row);
            let triggered = out
                .fired_rule
                .map(|i| {
                    let t = rules.positive_rules[i].threshold as f32;
                    row.iter()
                        .zip(matrix.hypothesis_ids())
                        .filter(|(&s, _)| above(s, t))
                        .map(|(&s, &h)| (h, s))
                        .collect()
                })
                .unwrap_or_default();
            PseudoLabeled {
                review_id: id.to_string(),
                label: out.label,
                fired_rule: out.fired_rule,
                triggered,
            }
        })
        .collect();
    Ok(PseudoLabeling {
        set_hash: matrix.set_hash().to_string(),
        entries,
    })
}

/// JSONL: a `{"set_hash": ...}` line then one [`PseudoLabeled`] per line.
pub fn write_pseudo_labels(labels: &PseudoLabeling, path: &Path) -> Result<(), NliError> {
    let mut w = BufWriter::new(File::create(path).map_err(NliError::io(path))?);
    let mut write = |line: String| -> Result<(), NliError> {
        w.write_all(line.as_bytes()).map_err(NliError::io(path))?;
        w.write_all(b"\n").map_err(NliError::io(path))
    };
    write(serde_json::json!({ "set_hash": labels.set_hash }).to_string())?;
    for e in &labels.entries {
        write(serde_json::to_string(e).expect("label serializes"))?;
    }
    w.flush().map_err(NliError::io(path))
}

pub fn read_pseudo_labels(path: &Path) -> Result<PseudoLabeling, NliError> {
    let f = File::open(path).map_err(NliError::io(path))?;
    let corrupt = |reason: String| NliError::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = BufReader::new(f).lines();
    let head = lines
        .next()
        .ok_or_else(|| corrupt("empty file".into()))?
        .map_err(NliError::io(path))?;
    let head: serde_json::Value = serde_json::from_str(&head).map_err(|e| corrupt(e.to_string()))?;
    let set_hash = head["set_hash"]
        .as_str()
        .ok_or_else(|| corrupt("missing set_hash header".into()))?
        .to_string();
    let mut entries = Vec::new();
    for line in lines {
        let line = line.map_err(NliError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        entries.push(serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?);
    }
    Ok(PseudoLabeling { set_hash, entries })
}
