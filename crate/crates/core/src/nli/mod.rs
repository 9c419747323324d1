//! Zero-shot entailment scoring of (review, hypothesis) pairs and the
//! heuristic labeler built on top of the scores.

mod cache;
mod heuristics;
mod http;
mod matrix;
mod mock;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{bounded_map, BackendError, RetryPolicy};
use crate::corpus::ReviewCorpus;
use crate::hypotheses::{Hypothesis, HypothesisSet};

pub use cache::{CacheContext, ScoreCache};
pub use heuristics::{
    apply_heuristics, n_above, read_pseudo_labels, write_pseudo_labels, PseudoLabeled,
    PseudoLabeling, RowOutcome, STRICT_THRESHOLD,
};
pub use http::{HttpNliBackend, NliFieldMap};
pub use matrix::{read_matrix_file, EntailmentMatrix, MatrixHeader, MatrixReader, MatrixWriter};
pub use mock::{MockNliBackend, MockNliTable, Trigger};

pub use crate::hypotheses::PseudoLabel;

#[derive(Debug, Error)]
pub enum NliError {
    #[error("premise for review {0:?} is empty")]
    EmptyPremise(String),
    #[error("review {0:?} has no normalized text")]
    NotNormalized(String),
    #[error("invalid entailment score: {0}")]
    InvalidScore(String),
    #[error("invalid backend descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("backend failed after {completed} of {total} cells: {source}")]
    Backend {
        completed: usize,
        total: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Call(#[from] BackendError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl NliError {
    pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> NliError + '_ {
        move |source| NliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Backend output for one pair. Only `entail` feeds the labeler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntailmentScore {
    pub entail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neutral: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contradict: Option<f64>,
}

impl EntailmentScore {
    pub fn new(entail: f64, neutral: Option<f64>, contradict: Option<f64>) -> Result<Self, NliError> {
        let s = EntailmentScore {
            entail,
            neutral,
            contradict,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), NliError> {
        let parts = [Some(self.entail), self.neutral, self.contradict];
        for p in parts.into_iter().flatten() {
            if !(0.0..=1.0).contains(&p) {
                return Err(NliError::InvalidScore(format!("probability {p} outside [0, 1]")));
            }
        }
        if let (Some(n), Some(c)) = (self.neutral, self.contradict) {
            let total = self.entail + n + c;
            if !(0.99..=1.01).contains(&total) {
                return Err(NliError::InvalidScore(format!(
                    "distribution sums to {total:.4}"
                )));
            }
        }
        Ok(())
    }
}

fn default_timeout() -> f64 {
    30.0
}

fn default_inflight() -> usize {
    8
}

/// Identity and transport settings of one NLI backend. The model identity is
/// configuration; any zero-shot NLI checkpoint behind the wire contract works.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliBackendDescriptor {
    pub name: String,
    pub model: String,
    /// URL, or `"mock"` for the offline table backend.
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub fields: NliFieldMap,
}

impl NliBackendDescriptor {
    pub fn mock(name: &str) -> Self {
        NliBackendDescriptor {
            name: name.to_string(),
            model: format!("mock-{name}"),
            endpoint: "mock".to_string(),
            timeout_secs: default_timeout(),
            max_inflight: default_inflight(),
            retry: RetryPolicy::none(),
            fields: NliFieldMap::default(),
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }

    pub fn validate(&self) -> Result<(), NliError> {
        if !(self.timeout_secs > 0.0) {
            return Err(NliError::InvalidDescriptor(format!(
                "{}: timeout must be positive",
                self.name
            )));
        }
        if self.max_inflight == 0 {
            return Err(NliError::InvalidDescriptor(format!(
                "{}: max_inflight must be at least 1",
                self.name
            )));
        }
        Ok(())
    }
}

pub trait NliBackend: Send + Sync {
    fn descriptor(&self) -> &NliBackendDescriptor;

    /// One attempt at scoring a pair; retries are handled by [`infer_pair`].
    fn infer(&self, premise: &str, hypothesis: &Hypothesis) -> Result<EntailmentScore, BackendError>;
}

/// Scores one pair, retrying transient failures per the backend's policy.
pub fn infer_pair(
    backend: &dyn NliBackend,
    premise: &str,
    hypothesis: &Hypothesis,
) -> Result<EntailmentScore, NliError> {
    if premise.trim().is_empty() {
        return Err(NliError::EmptyPremise(premise.to_string()));
    }
    let score = backend
        .descriptor()
        .retry
        .run(|| backend.infer(premise, hypothesis))?;
    score
        .validate()
        .map_err(|e| NliError::Call(BackendError::Malformed(e.to_string())))?;
    Ok(score)
}

/// Scores every review against every hypothesis of `set`.
///
/// Cached cells are reused; new cells are appended to the cache as they
/// complete so an interrupted run resumes where it stopped.
pub fn score_corpus(
    backend: &dyn NliBackend,
    corpus: &ReviewCorpus,
    set: &HypothesisSet,
    cache: Option<&ScoreCache>,
) -> Result<EntailmentMatrix, NliError> {
    let desc = backend.descriptor();
    desc.validate()?;
    let mut premises = Vec::with_capacity(corpus.len());
    for r in corpus.iter() {
        let p = r
            .text_norm
            .as_deref()
            .ok_or_else(|| NliError::NotNormalized(r.id.clone()))?;
        if p.is_empty() {
            return Err(NliError::EmptyPremise(r.id.clone()));
        }
        premises.push(p);
    }
    let n_h = set.len();
    let total = corpus.len() * n_h;
    let mut scores = vec![f32::NAN; total];
    let mut missing = Vec::new();
    for (ri, r) in corpus.iter().enumerate() {
        for (hi, h) in set.hypotheses.iter().enumerate() {
            match cache.and_then(|c| c.get(&r.id, h.id)) {
                Some(s) => scores[ri * n_h + hi] = s.entail as f32,
                None => missing.push((ri, hi)),
            }
        }
    }
    log::info!(
        "scoring {} x {} with {}: {} cached, {} to infer",
        corpus.len(),
        n_h,
        desc.name,
        total - missing.len(),
        missing.len()
    );

    let results = bounded_map(&missing, desc.max_inflight, |_, &(ri, hi)| {
        let h = &set.hypotheses[hi];
        let s = infer_pair(backend, premises[ri], h)?;
        if let Some(c) = cache {
            c.append(&corpus.reviews[ri].id, h.id, &s)?;
        }
        Ok::<_, NliError>(s)
    });
    if let Some(c) = cache {
        c.flush()?;
    }

    let mut failure = None;
    let mut done = total - missing.len();
    for (&(ri, hi), r) in missing.iter().zip(results) {
        match r {
            Some(Ok(s)) => {
                scores[ri * n_h + hi] = s.entail as f32;
                done += 1;
            }
            Some(Err(e)) if failure.is_none() => failure = Some(e),
            _ => {}
        }
    }
    if let Some(e) = failure {
        return Err(match e {
            NliError::Call(source) => NliError::Backend {
                completed: done,
                total,
                source,
            },
            other => other,
        });
    }

    EntailmentMatrix::new(
        corpus.iter().map(|r| r.id.clone()).collect(),
        set.hypotheses.iter().map(|h| h.id).collect(),
        format!("{}/{}", desc.name, desc.model),
        set.version_hash().to_string(),
        scores,
    )
}

/// Builds a backend from its descriptor. `mock` endpoints need a table.
pub fn build_backend(
    desc: NliBackendDescriptor,
    mock: Option<MockNliTable>,
) -> Result<Box<dyn NliBackend>, NliError> {
    desc.validate()?;
    if desc.is_mock() {
        Ok(Box::new(MockNliBackend::new(desc, mock.unwrap_or_default())))
    } else {
        Ok(Box::new(HttpNliBackend::new(desc)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_text, Review, Store};
    use crate::hypotheses::{builtin_domain_mh, builtin_generic};
    use std::sync::atomic::{AtomicUsize, Ordering};

    pub(crate) fn corpus_of(texts: &[&str]) -> ReviewCorpus {
        let reviews = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Review {
                id: format!("r{i}"),
                app_name: "Calm".into(),
                store: Store::GooglePlay,
                rating: 1,
                text_raw: t.to_string(),
                text_norm: Some(normalize_text(t)),
                submitted_at: None,
                gold_label: None,
            })
            .collect();
        ReviewCorpus::from_reviews("mem", reviews)
    }

    fn table() -> MockNliTable {
        MockNliTable {
            triggers: vec![Trigger {
                phrase: "sell my data".into(),
                hypothesis_ids: vec![14],
                score: 0.92,
            }],
            ..MockNliTable::default()
        }
    }

    #[test]
    fn score_validation() {
        assert!(EntailmentScore::new(0.7, Some(0.2), Some(0.1)).is_ok());
        assert!(EntailmentScore::new(0.7, None, None).is_ok());
        assert!(EntailmentScore::new(1.2, None, None).is_err());
        assert!(EntailmentScore::new(0.7, Some(0.7), Some(0.1)).is_err());
        assert!(EntailmentScore::new(0.5, Some(0.3), Some(0.195)).is_ok());
    }

    #[test]
    fn descriptor_validation() {
        let mut d = NliBackendDescriptor::mock("m");
        assert!(d.validate().is_ok());
        d.timeout_secs = 0.0;
        assert!(d.validate().is_err());
        let mut d = NliBackendDescriptor::mock("m");
        d.max_inflight = 0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn mock_pair_examples() {
        let b = MockNliBackend::new(NliBackendDescriptor::mock("m"), table());
        let set = builtin_domain_mh();
        let h14 = set.get(14).unwrap();
        let hi = infer_pair(&b, "they sell my data to advertisers", h14).unwrap();
        assert!(hi.entail >= 0.85, "{hi:?}");
        let lo = infer_pair(&b, "great app love it", h14).unwrap();
        assert!(lo.entail <= 0.2, "{lo:?}");
        assert!(matches!(infer_pair(&b, "  ", h14), Err(NliError::EmptyPremise(_))));
    }

    #[test]
    fn matrix_dimensions_and_warm_cache() {
        let corpus = corpus_of(&["sell my data please", "nice", "bad bugs"]);
        let set = builtin_domain_mh();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let b = MockNliBackend::new(NliBackendDescriptor::mock("m"), table());
        let ctx = CacheContext::new(b.descriptor(), &set);

        let cache = ScoreCache::open(&path, ctx.clone()).unwrap();
        let m1 = score_corpus(&b, &corpus, &set, Some(&cache)).unwrap();
        assert_eq!(m1.scores().len(), 63);
        assert_eq!(b.calls(), 63);
        drop(cache);

        let b2 = MockNliBackend::new(NliBackendDescriptor::mock("m"), table());
        let cache = ScoreCache::open(&path, ctx).unwrap();
        assert_eq!(cache.len(), 63);
        let m2 = score_corpus(&b2, &corpus, &set, Some(&cache)).unwrap();
        assert_eq!(b2.calls(), 0);
        assert_eq!(m1, m2);
    }

    #[test]
    fn cache_is_keyed_by_set_hash() {
        let corpus = corpus_of(&["sell my data"]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let b = MockNliBackend::new(NliBackendDescriptor::mock("m"), table());
        let mh = builtin_domain_mh();
        let cache = ScoreCache::open(&path, CacheContext::new(b.descriptor(), &mh)).unwrap();
        score_corpus(&b, &corpus, &mh, Some(&cache)).unwrap();
        drop(cache);
        let g = builtin_generic();
        let cache = ScoreCache::open(&path, CacheContext::new(b.descriptor(), &g)).unwrap();
        assert_eq!(cache.len(), 0);
    }

    struct Flaky {
        desc: NliBackendDescriptor,
        calls: AtomicUsize,
        fail_from: usize,
    }

    impl NliBackend for Flaky {
        fn descriptor(&self) -> &NliBackendDescriptor {
            &self.desc
        }
        fn infer(&self, _p: &str, _h: &Hypothesis) -> Result<EntailmentScore, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n >= self.fail_from {
                Err(BackendError::Transient("connection refused".into()))
            } else {
                Ok(EntailmentScore::new(0.1, Some(0.45), Some(0.45)).unwrap())
            }
        }
    }

    #[test]
    fn failure_reports_progress_and_resume_completes() {
        let corpus = corpus_of(&["one", "two", "three"]);
        let set = builtin_domain_mh();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        let mut desc = NliBackendDescriptor::mock("flaky");
        desc.max_inflight = 1;
        let flaky = Flaky {
            desc: desc.clone(),
            calls: AtomicUsize::new(0),
            fail_from: 30,
        };
        let ctx = CacheContext::new(&desc, &set);
        let cache = ScoreCache::open(&path, ctx.clone()).unwrap();
        let err = score_corpus(&flaky, &corpus, &set, Some(&cache)).unwrap_err();
        match err {
            NliError::Backend { completed, total, source } => {
                assert_eq!(completed, 30);
                assert_eq!(total, 63);
                assert!(matches!(source, BackendError::Exhausted { attempts: 1, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
        drop(cache);

        let ok = Flaky {
            desc,
            calls: AtomicUsize::new(0),
            fail_from: usize::MAX,
        };
        let cache = ScoreCache::open(&path, ctx).unwrap();
        assert_eq!(cache.len(), 30);
        let m = score_corpus(&ok, &corpus, &set, Some(&cache)).unwrap();
        assert_eq!(ok.calls.load(Ordering::SeqCst), 33);
        assert_eq!(m.scores().len(), 63);
    }

    #[test]
    fn requires_normalized_text() {
        let mut corpus = corpus_of(&["x"]);
        corpus.reviews[0].text_norm = None;
        let b = MockNliBackend::new(NliBackendDescriptor::mock("m"), table());
        assert!(matches!(
            score_corpus(&b, &corpus, &builtin_domain_mh(), None),
            Err(NliError::NotNormalized(_))
        ));
    }
}
