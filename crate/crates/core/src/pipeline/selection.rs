use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{write_json_atomic, PipelineConfig, PipelineError};
use crate::corpus::{filter_by_rating, partition_gold, ReviewCorpus};
use crate::eval::{confusion_from_nli, metrics, select_best, ComparisonTable, MetricsReport};
use crate::hypotheses::{HypothesisSet, PseudoLabel};
use crate::nli::{apply_heuristics, score_corpus, write_pseudo_labels, CacheContext, PseudoLabeling, ScoreCache};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Every backend on the baseline hypothesis set.
    pub models: ComparisonTable,
    /// The best backend on every hypothesis set, against the baseline set.
    pub hypothesis_sets: ComparisonTable,
    pub best_backend: String,
    pub best_set: String,
    #[serde(skip)]
    pub pseudo_labels: PseudoLabeling,
}

fn evaluate(
    cfg: &PipelineConfig,
    backend_idx: usize,
    set: &HypothesisSet,
    gold: &ReviewCorpus,
) -> Result<(MetricsReport, PseudoLabeling), PipelineError> {
    let b = &cfg.nli.backends[backend_idx];
    let backend = cfg.build_nli(b)?;
    let cache = ScoreCache::open(
        &cfg.cache_dir().join("nli_scores.jsonl"),
        CacheContext::new(backend.descriptor(), set),
    )?;
    let matrix = score_corpus(backend.as_ref(), gold, set, Some(&cache))?;
    let labels = apply_heuristics(&matrix, &set.heuristics)?;
    let by_id: HashMap<&str, PseudoLabel> = labels
        .entries
        .iter()
        .map(|e| (e.review_id.as_str(), e.label))
        .collect();
    let report = metrics(&confusion_from_nli(gold, &by_id)?);
    log::info!("{} on {}: {report}", b.descriptor.name, set.set_id);
    Ok((report, labels))
}

/// Scores the labeled corpus with every backend on the first (baseline)
/// hypothesis set, keeps the best backend, scores it on the remaining sets
/// and emits the pseudo-labeled corpus of the winning pair.
pub fn run_selection(cfg: &PipelineConfig) -> Result<SelectionOutcome, PipelineError> {
    let lc = cfg
        .labeled_corpus
        .as_ref()
        .ok_or_else(|| PipelineError::Config("selection needs `labeled_corpus`".into()))?;
    let ingested = cfg.ingest(lc)?;
    let corpus = filter_by_rating(&ingested.corpus, lc.min_rating.unwrap_or(1), lc.max_rating.unwrap_or(5))?;
    let (mut gold, unlabeled) = partition_gold(&corpus);
    if !unlabeled.is_empty() {
        log::warn!("ignoring {} reviews without a gold label", unlabeled.len());
    }
    gold.normalize_all();
    let before = gold.len();
    gold.reviews.retain(|r| r.text_norm.as_deref().is_some_and(|t| !t.is_empty()));
    if gold.len() < before {
        log::warn!("ignoring {} reviews with no text after normalization", before - gold.len());
    }
    gold.provenance.accepted = gold.len();
    if gold.is_empty() {
        return Err(PipelineError::Config("labeled corpus has no usable gold reviews".into()));
    }

    let sets = cfg.sets()?;
    let (base_name, base_set) = &sets[0];
    let mut runs = Vec::new();
    for (i, b) in cfg.nli.backends.iter().enumerate() {
        let (report, labels) = evaluate(cfg, i, base_set, &gold)?;
        runs.push((b.descriptor.name.clone(), report, labels));
    }
    let models = select_best(
        &runs.iter().map(|(n, r, _)| (n.clone(), *r)).collect::<Vec<_>>(),
        None,
    )?;
    let best_idx = runs.iter().position(|(n, _, _)| *n == models.winner).expect("winner ran");
    let (_, base_report, base_labels) = runs.swap_remove(best_idx);

    let mut set_rows = vec![(base_name.clone(), base_report)];
    let mut set_labels = vec![base_labels];
    for (name, set) in &sets[1..] {
        let (report, labels) = evaluate(cfg, best_idx, set, &gold)?;
        set_rows.push((name.clone(), report));
        set_labels.push(labels);
    }
    let hypothesis_sets = select_best(&set_rows, Some(base_name))?;
    let win = set_rows
        .iter()
        .position(|(n, _)| *n == hypothesis_sets.winner)
        .expect("winner ran");

    let outcome = SelectionOutcome {
        best_backend: models.winner.clone(),
        best_set: hypothesis_sets.winner.clone(),
        models,
        hypothesis_sets,
        pseudo_labels: set_labels.swap_remove(win),
    };
    let out = cfg.output_dir();
    write_json_atomic(&out.join("selection.json"), &outcome)?;
    write_pseudo_labels(&outcome.pseudo_labels, &out.join("selection_labels.jsonl"))?;
    Ok(outcome)
}
