//! Confusion matrices with stage-specific positive definitions, P/R/F1,
//! the random-classifier baseline, Cohen's kappa and best-candidate
//! selection.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ReviewCorpus;
use crate::hypotheses::PseudoLabel;
use crate::llm::BinaryLabel;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("review {0:?} has no gold label")]
    Unlabeled(String),
    #[error("no prediction for gold review {0:?}")]
    MissingPrediction(String),
    #[error("label vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("nothing to evaluate")]
    Empty,
    #[error("baseline needs 0 < positives <= total (got {n_pos} of {n_total})")]
    BaselineCounts { n_pos: usize, n_total: usize },
    #[error("baseline {0:?} is not among the candidates")]
    UnknownBaseline(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    fn record(&mut self, gold_positive: bool, predicted_positive: bool) {
        match (gold_positive, predicted_positive) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    /// Builds a matrix from (gold, predicted) booleans.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (g, p) in pairs {
            cm.record(g, p);
        }
        cm
    }
}

fn confusion_by<P>(
    gold: &ReviewCorpus,
    predictions: &HashMap<&str, P>,
    positive: impl Fn(&P) -> bool,
) -> Result<ConfusionMatrix, EvalError> {
    let mut cm = ConfusionMatrix::default();
    for r in gold.iter() {
        let g = r.gold_label.ok_or_else(|| EvalError::Unlabeled(r.id.clone()))?;
        let p = predictions
            .get(r.id.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(r.id.clone()))?;
        cm.record(g.is_privacy(), positive(p));
    }
    Ok(cm)
}

/// NLI-stage confusion: only `maybe_privacy` counts as a positive
/// prediction; `maybe_not_privacy` and `undetermined` are both negative.
pub fn confusion_from_nli(
    gold: &ReviewCorpus,
    pseudo: &HashMap<&str, PseudoLabel>,
) -> Result<ConfusionMatrix, EvalError> {
    confusion_by(gold, pseudo, |l| *l == PseudoLabel::MaybePrivacy)
}

/// LLM-stage confusion: positive prediction iff the decision is `yes`.
pub fn confusion_from_llm(
    gold: &ReviewCorpus,
    decisions: &HashMap<&str, BinaryLabel>,
) -> Result<ConfusionMatrix, EvalError> {
    confusion_by(gold, decisions, |d| d.is_yes())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "p")]
    pub precision: f64,
    #[serde(rename = "r")]
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl MetricsReport {
    /// F1 from precision and recall; 0 when both are 0.
    pub fn from_pr(precision: f64, recall: f64) -> Self {
        MetricsReport {
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
        }
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P={:.3} R={:.3} F1={:.3}", self.precision, self.recall, self.f1)
    }
}

/// P = tp/(tp+fp), R = tp/(tp+fn); an empty denominator gives 0.
pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let tp = cm.tp as f64;
    MetricsReport::from_pr(ratio(tp, tp + cm.fp as f64), ratio(tp, tp + cm.fn_ as f64))
}

/// Random classifier: precision is the positive share, recall is 0.5.
pub fn random_baseline(n_pos: usize, n_total: usize) -> Result<MetricsReport, EvalError> {
    if n_pos == 0 || n_pos > n_total {
        return Err(EvalError::BaselineCounts { n_pos, n_total });
    }
    Ok(MetricsReport::from_pr(n_pos as f64 / n_total as f64, 0.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub n: usize,
    /// Positions where the two raters disagree.
    pub disagreements: Vec<usize>,
}

/// Two-rater Cohen's kappa with per-rater marginals.
pub fn cohen_kappa<L: Eq + Hash>(labels_a: &[L], labels_b: &[L]) -> Result<KappaReport, EvalError> {
    if labels_a.len() != labels_b.len() {
        return Err(EvalError::LengthMismatch(labels_a.len(), labels_b.len()));
    }
    if labels_a.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = labels_a.len() as f64;
    let disagreements: Vec<usize> = labels_a
        .iter()
        .zip(labels_b)
        .enumerate()
        .filter(|(_, (a, b))| a != b)
        .map(|(i, _)| i)
        .collect();
    let p_o = 1.0 - disagreements.len() as f64 / n;

    let mut count_a: HashMap<&L, usize> = HashMap::new();
    let mut count_b: HashMap<&L, usize> = HashMap::new();
    for (a, b) in labels_a.iter().zip(labels_b) {
        *count_a.entry(a).or_default() += 1;
        *count_b.entry(b).or_default() += 1;
    }
    let categories: HashSet<&L> = count_a.keys().chain(count_b.keys()).copied().collect();
    let p_e: f64 = categories
        .iter()
        .map(|c| {
            let a = *count_a.get(c).unwrap_or(&0) as f64 / n;
            let b = *count_b.get(c).unwrap_or(&0) as f64 / n;
            a * b
        })
        .sum();

    // p_e == 1 only when both raters use a single, shared category, which
    // forces p_o == 1 as well.
    let kappa = if (1.0 - p_e).abs() < 1e-12 {
        1.0
    } else {
        (p_o - p_e) / (1.0 - p_e)
    };
    Ok(KappaReport {
        kappa,
        p_o,
        p_e,
        n: labels_a.len(),
        disagreements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    #[serde(flatten)]
    pub report: MetricsReport,
    /// Candidate F1 over baseline F1; `None` when the baseline F1 is 0.
    pub improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    #[serde(rename = "candidates")]
    pub rows: Vec<ComparisonRow>,
    pub winner: String,
    pub baseline: String,
}

impl ComparisonTable {
    pub fn winner_row(&self) -> &ComparisonRow {
        self.rows
            .iter()
            .find(|r| r.id == self.winner)
            .expect("winner is a row")
    }

    pub fn row(&self, id: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.id == id)
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(9);
        writeln!(f, "{:<w$}  {:>6} {:>6} {:>6}  improvement", "candidate", "P", "R", "F1")?;
        for r in &self.rows {
            let mark = if r.id == self.winner { " *" } else { "" };
            let imp = match (r.id == self.baseline, r.improvement) {
                (true, _) => "baseline".to_string(),
                (false, Some(x)) => format!("{x:.2}x"),
                (false, None) => "-".to_string(),
            };
            writeln!(
                f,
                "{:<w$}  {:>6.3} {:>6.3} {:>6.3}  {imp}{mark}",
                r.id, r.report.precision, r.report.recall, r.report.f1
            )?;
        }
        Ok(())
    }
}

/// Picks the candidate with the highest F1; ties go to higher precision,
/// then the lexicographically smaller id. Improvement ratios are against
/// `baseline` (the first candidate when `None`).
pub fn select_best(
    candidates: &[(String, MetricsReport)],
    baseline: Option<&str>,
) -> Result<ComparisonTable, EvalError> {
    let first = candidates.first().ok_or(EvalError::Empty)?;
    let baseline_id = baseline.unwrap_or(&first.0);
    let base = candidates
        .iter()
        .find(|(id, _)| id == baseline_id)
        .ok_or_else(|| EvalError::UnknownBaseline(baseline_id.to_string()))?;
    let base_f1 = base.1.f1;
    let winner = candidates
        .iter()
        .max_by(|(ia, a), (ib, b)| {
            a.f1.total_cmp(&b.f1)
                .then(a.precision.total_cmp(&b.precision))
                .then_with(|| ib.cmp(ia))
        })
        .expect("non-empty");
    Ok(ComparisonTable {
        rows: candidates
            .iter()
            .map(|(id, report)| ComparisonRow {
                id: id.clone(),
                report: *report,
                improvement: (base_f1 > 0.0).then(|| report.f1 / base_f1),
            })
            .collect(),
        winner: winner.0.clone(),
        baseline: base.0.clone(),
    })
}
