use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{Backends, RunManifest, StageCounts, Timings};
use super::{sha256_hex, PipelineConfig, PipelineError};
use crate::corpus::{filter_by_rating, write_rejects, Review, ReviewCorpus};
use crate::hypotheses::PseudoLabel;
use crate::llm::{self, classify_corpus, maybe_privacy_subset, LlmFailure, VoteCache, VoteRecord};
use crate::nli::{apply_heuristics, score_corpus, write_pseudo_labels, CacheContext, ScoreCache};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const QUEUE_FILE: &str = "extracted.jsonl";

/// A review the LLM voted `yes` on, with the evidence that got it there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub review: Review,
    pub fired_rule: Option<usize>,
    pub triggered: Vec<(u32, f32)>,
    pub vote: VoteRecord,
}

#[derive(Debug, Clone)]
pub struct ExtractionOutcome {
    pub manifest: RunManifest,
    pub queue: Vec<QueueEntry>,
    pub failures: Vec<LlmFailure>,
    pub timings: Timings,
}

pub fn read_queue(path: &Path) -> Result<Vec<QueueEntry>, PipelineError> {
    Ok(llm::read_jsonl(path)?)
}

/// Runs preprocessing, NLI scoring and labeling, and LLM classification of
/// the maybe-privacy subset, writing every intermediate artifact and the
/// manifest into the output directory. Interrupted runs resume from the
/// score and vote caches.
pub fn run_extraction(cfg: &PipelineConfig) -> Result<ExtractionOutcome, PipelineError> {
    let out = cfg.output_dir();
    let cache_dir = cfg.cache_dir();
    for d in [&out, &cache_dir] {
        std::fs::create_dir_all(d).map_err(PipelineError::io(d))?;
    }
    let corpus_cfg = cfg
        .corpus
        .as_ref()
        .ok_or_else(|| PipelineError::Config("extraction needs `corpus`".into()))?;
    let mut timings = Timings::default();
    let mut counts = StageCounts::default();

    let corpus_path = cfg.resolve_path(&corpus_cfg.path);
    let corpus_digest =
        sha256_hex(&std::fs::read(&corpus_path).map_err(PipelineError::io(&corpus_path))?);
    let ingested = timings.time("ingest", || cfg.ingest(corpus_cfg))?;
    write_rejects(&ingested.rejects, &out.join("rejects.jsonl"))?;
    counts.ingested = ingested.corpus.len();
    counts.rejected = ingested.rejects.len();

    let filtered = filter_by_rating(
        &ingested.corpus,
        corpus_cfg.min_rating.unwrap_or(1),
        corpus_cfg.max_rating.unwrap_or(2),
    )?;
    counts.rating_filtered = filtered.len();

    let held_out: HashSet<String> = match &cfg.labeled_corpus {
        Some(l) => cfg.ingest(l)?.corpus.reviews.into_iter().map(|r| r.id).collect(),
        None => HashSet::new(),
    };
    let mut scored = Vec::with_capacity(filtered.len());
    for mut r in filtered.reviews {
        if r.gold_label.is_some() || held_out.contains(&r.id) {
            counts.excluded_labeled += 1;
            continue;
        }
        let norm = crate::corpus::normalize_text(&r.text_raw);
        if norm.is_empty() {
            counts.excluded_empty += 1;
            continue;
        }
        r.text_norm = Some(norm);
        scored.push(r);
    }
    let mut scored = ReviewCorpus::from_reviews(ingested.corpus.provenance.source.clone(), scored);
    scored.provenance.ingested_at = ingested.corpus.provenance.ingested_at;
    counts.nli_scored = scored.len();

    let (set_name, set) = cfg.extraction_set()?;
    let nli_cfg = cfg.nli_backend()?;
    let nli_backend = cfg.build_nli(nli_cfg)?;
    let matrix = timings.time("nli", || {
        let cache = ScoreCache::open(
            &cache_dir.join("nli_scores.jsonl"),
            CacheContext::new(nli_backend.descriptor(), &set),
        )?;
        score_corpus(nli_backend.as_ref(), &scored, &set, Some(&cache))
    })?;
    matrix.write_file(&out.join("scores.bin"))?;
    let labels = apply_heuristics(&matrix, &set.heuristics)?;
    write_pseudo_labels(&labels, &out.join("pseudo_labels.jsonl"))?;
    counts.maybe_privacy = labels.count(PseudoLabel::MaybePrivacy);
    counts.maybe_not_privacy = labels.count(PseudoLabel::MaybeNotPrivacy);
    counts.undetermined = labels.count(PseudoLabel::Undetermined);

    let candidates = maybe_privacy_subset(&scored, &labels);
    let llm_backend = cfg.build_llm()?;
    let template = cfg.template()?;
    let system = template.system_message(&set)?;
    let outcome = timings.time("llm", || {
        let cache = VoteCache::open(
            &cache_dir.join("llm_votes.jsonl"),
            VoteCache::context_key(llm_backend.descriptor(), &system, &cfg.sampling),
        )?;
        classify_corpus(llm_backend.as_ref(), &candidates, &labels, &set, &template, &cfg.sampling, Some(&cache))
    })?;
    llm::write_jsonl(&outcome.records, &out.join("votes.jsonl"))?;
    llm::write_jsonl(&outcome.failures, &out.join("llm_failures.jsonl"))?;
    counts.llm_yes = outcome.yes();
    counts.llm_no = outcome.no();
    counts.llm_failed = outcome.failures.len();
    if counts.llm_failed > 0 {
        log::warn!("{} reviews failed LLM classification; rerun to retry them", counts.llm_failed);
    }

    let by_id: std::collections::HashMap<&str, &Review> = candidates.iter().map(|r| (r.id.as_str(), r)).collect();
    let queue: Vec<QueueEntry> = outcome
        .records
        .iter()
        .filter(|v| v.decision.is_yes())
        .map(|v| {
            let review = (*by_id.get(v.review_id.as_str()).expect("vote for a candidate")).clone();
            let pl = labels.get(&v.review_id).expect("candidate was labeled");
            QueueEntry {
                review,
                fired_rule: pl.fired_rule,
                triggered: pl.triggered.clone(),
                vote: v.clone(),
            }
        })
        .collect();
    llm::write_jsonl(&queue, &out.join(QUEUE_FILE))?;
    counts.human_pending = queue.len();

    let config_digest = cfg.digest();
    let manifest = RunManifest {
        run_id: sha256_hex(format!("{config_digest}:{corpus_digest}").as_bytes())[..16].to_string(),
        config_digest,
        corpus_digest,
        hypothesis_set: set_name,
        hypothesis_set_hash: set.version_hash().to_string(),
        prompt_version: template.version.clone(),
        prompt_digest: template.digest(),
        counts,
        backends: Backends {
            nli: nli_backend.descriptor().clone(),
            llm: llm_backend.descriptor().clone(),
        },
        timings_file: TIMINGS_FILE.into(),
    };
    let violations = counts.violations();
    assert!(violations.is_empty(), "stage counts leak: {violations:?}");
    manifest.write(&out.join(MANIFEST_FILE))?;
    timings.write(&out.join(TIMINGS_FILE))?;
    log::info!(
        "extraction: {} scored, {} maybe-privacy, {} yes, {} no, {} failed",
        counts.nli_scored,
        counts.maybe_privacy,
        counts.llm_yes,
        counts.llm_no,
        counts.llm_failed
    );
    Ok(ExtractionOutcome {
        manifest,
        queue,
        failures: outcome.failures,
        timings,
    })
}
