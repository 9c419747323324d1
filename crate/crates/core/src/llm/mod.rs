//! Yes/no classification of candidate reviews by a chat-completions LLM,
//! with repeated sampling and majority voting.

mod cache;
mod http;
mod mock;
mod prompt;
mod vote;

use std::convert::Infallible;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{bounded_map, BackendError, RetryPolicy};
use crate::corpus::ReviewCorpus;
use crate::hypotheses::{HypothesisSet, PseudoLabel};
use crate::nli::PseudoLabeling;

pub use cache::VoteCache;
pub use http::HttpLlmBackend;
pub use mock::{MockLlmBackend, MockLlmScript, ERROR_RESPONSE};
pub use prompt::{build_prompt, PromptMessages, PromptTemplate, HYPOTHESES_PLACEHOLDER};
pub use vote::{majority_vote, parse_response, BinaryLabel, Vote};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("hypothesis set is empty")]
    EmptyHypothesisSet,
    #[error("prompt template: {0}")]
    Template(String),
    #[error("invalid sampling settings: {0}")]
    Settings(String),
    #[error("invalid backend descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("review {0:?} is not a maybe-privacy candidate")]
    NotCandidate(String),
    #[error("sample {sample} for review {review_id:?} failed: {source}")]
    Backend {
        review_id: String,
        sample: usize,
        #[source]
        source: BackendError,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
}

impl LlmError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> LlmError + '_ {
        move |source| LlmError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSettings {
    pub temperature: f64,
    pub top_p: f64,
    pub num_samples: usize,
    pub max_response_tokens: u32,
}

impl Default for SamplingSettings {
    fn default() -> Self {
        SamplingSettings {
            temperature: 0.3,
            top_p: 0.9,
            num_samples: 5,
            max_response_tokens: 64,
        }
    }
}

impl SamplingSettings {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Settings(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(LlmError::Settings(format!("top_p {} outside (0, 1]", self.top_p)));
        }
        if self.num_samples.is_multiple_of(2) {
            return Err(LlmError::Settings(format!(
                "num_samples {} must be odd and positive",
                self.num_samples
            )));
        }
        if self.max_response_tokens == 0 {
            return Err(LlmError::Settings("max_response_tokens must be positive".into()));
        }
        Ok(())
    }
}

fn default_timeout() -> f64 {
    60.0
}

fn default_inflight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmBackendDescriptor {
    pub name: String,
    pub model: String,
    /// Chat-completions URL, or `"mock"`.
    pub endpoint: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

impl LlmBackendDescriptor {
    pub fn mock(name: &str) -> Self {
        LlmBackendDescriptor {
            name: name.to_string(),
            model: format!("mock-{name}"),
            endpoint: "mock".to_string(),
            timeout_secs: default_timeout(),
            max_inflight: default_inflight(),
            retry: RetryPolicy::none(),
            api_key_env: None,
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint == "mock"
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.timeout_secs > 0.0) || self.max_inflight == 0 {
            return Err(LlmError::InvalidDescriptor(format!(
                "{}: timeout must be positive and max_inflight at least 1",
                self.name
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

/// Request body of the chat-completions wire contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(model: &str, prompt: &PromptMessages, settings: &SamplingSettings) -> Self {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: prompt.system.clone(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: prompt.user.clone(),
                },
            ],
            temperature: settings.temperature,
            top_p: settings.top_p,
            max_tokens: settings.max_response_tokens,
        }
    }
}

/// Which review and which of its samples a request belongs to. HTTP
/// backends ignore it; the scripted mock answers from it.
#[derive(Debug, Clone, Copy)]
pub struct SampleContext<'a> {
    pub review_id: &'a str,
    pub sample: usize,
}

pub trait LlmBackend: Send + Sync {
    fn descriptor(&self) -> &LlmBackendDescriptor;

    /// One completion attempt; returns the message content.
    fn complete(&self, request: &ChatRequest, ctx: SampleContext<'_>) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub review_id: String,
    pub raw_responses: Vec<String>,
    pub votes: Vec<Vote>,
    pub decision: BinaryLabel,
    pub tie_flag: bool,
}

impl VoteRecord {
    pub fn tally(&self) -> (usize, usize, usize) {
        let count = |v| self.votes.iter().filter(|x| **x == v).count();
        (count(Vote::Yes), count(Vote::No), count(Vote::Abstain))
    }
}

/// Requests `num_samples` independent completions and votes on them.
pub fn classify_review(
    backend: &dyn LlmBackend,
    review_id: &str,
    prompt: &PromptMessages,
    settings: &SamplingSettings,
) -> Result<VoteRecord, LlmError> {
    settings.validate()?;
    let desc = backend.descriptor();
    let request = ChatRequest::new(&desc.model, prompt, settings);
    let mut raw_responses = Vec::with_capacity(settings.num_samples);
    for sample in 0..settings.num_samples {
        let ctx = SampleContext { review_id, sample };
        let text = desc
            .retry
            .run(|| backend.complete(&request, ctx))
            .map_err(|source| LlmError::Backend {
                review_id: review_id.to_string(),
                sample,
                source,
            })?;
        raw_responses.push(text);
    }
    let votes: Vec<Vote> = raw_responses.iter().map(|r| parse_response(r)).collect();
    let (decision, tie_flag) = majority_vote(&votes);
    Ok(VoteRecord {
        review_id: review_id.to_string(),
        raw_responses,
        votes,
        decision,
        tie_flag,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmFailure {
    pub review_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassifyOutcome {
    pub records: Vec<VoteRecord>,
    pub failures: Vec<LlmFailure>,
}

impl ClassifyOutcome {
    pub fn yes(&self) -> usize {
        self.records.iter().filter(|r| r.decision.is_yes()).count()
    }

    pub fn no(&self) -> usize {
        self.records.len() - self.yes()
    }

    pub fn yes_ids(&self) -> Vec<&str> {
        self.records
            .iter()
            .filter(|r| r.decision.is_yes())
            .map(|r| r.review_id.as_str())
            .collect()
    }
}

/// Reviews from `corpus` that `labels` marks maybe-privacy, in corpus order.
pub fn maybe_privacy_subset(corpus: &ReviewCorpus, labels: &PseudoLabeling) -> ReviewCorpus {
    let keep: std::collections::HashSet<&str> = labels.maybe_privacy_ids().into_iter().collect();
    let reviews = corpus
        .iter()
        .filter(|r| keep.contains(r.id.as_str()))
        .cloned()
        .collect();
    let mut sub = ReviewCorpus::from_reviews(corpus.provenance.source.clone(), reviews);
    sub.provenance.ingested_at = corpus.provenance.ingested_at;
    sub
}

/// Classifies every candidate. Per-review backend failures are collected in
/// `failures` rather than aborting the batch; cached records are reused.
pub fn classify_corpus(
    backend: &dyn LlmBackend,
    candidates: &ReviewCorpus,
    labels: &PseudoLabeling,
    set: &HypothesisSet,
    template: &PromptTemplate,
    settings: &SamplingSettings,
    cache: Option<&VoteCache>,
) -> Result<ClassifyOutcome, LlmError> {
    settings.validate()?;
    backend.descriptor().validate()?;
    let system = template.system_message(set)?;
    let label_of: std::collections::HashMap<&str, PseudoLabel> = labels
        .entries
        .iter()
        .map(|e| (e.review_id.as_str(), e.label))
        .collect();
    for r in candidates.iter() {
        if label_of.get(r.id.as_str()) != Some(&PseudoLabel::MaybePrivacy) {
            return Err(LlmError::NotCandidate(r.id.clone()));
        }
    }

    let results = bounded_map(&candidates.reviews, backend.descriptor().max_inflight, |_, review| {
        if let Some(hit) = cache.and_then(|c| c.get(&review.id)) {
            return Ok::<_, Infallible>(Ok(hit));
        }
        let prompt = PromptMessages {
            system: system.clone(),
            user: review.normalized().into_owned(),
        };
        let rec = classify_review(backend, &review.id, &prompt, settings);
        if let (Ok(rec), Some(c)) = (&rec, cache) {
            if let Err(e) = c.append(rec) {
                return Ok(Err(e));
            }
        }
        Ok(rec)
    });
    if let Some(c) = cache {
        c.flush()?;
    }

    let mut out = ClassifyOutcome::default();
    for (review, r) in candidates.iter().zip(results) {
        match r.expect("infallible worker ran every item") {
            Ok(Ok(rec)) => out.records.push(rec),
            Ok(Err(e @ LlmError::Io { .. })) => return Err(e),
            Ok(Err(e)) => {
                log::warn!("review {} failed: {e}", review.id);
                out.failures.push(LlmFailure {
                    review_id: review.id.clone(),
                    error: e.to_string(),
                });
            }
            Err(never) => match never {},
        }
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<(), LlmError> {
    let mut w = BufWriter::new(File::create(path).map_err(LlmError::io(path))?);
    for it in items {
        serde_json::to_writer(&mut w, it).expect("record serializes");
        w.write_all(b"\n").map_err(LlmError::io(path))?;
    }
    w.flush().map_err(LlmError::io(path))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, LlmError> {
    let f = File::open(path).map_err(LlmError::io(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(LlmError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| LlmError::Corrupt {
            path: path.to_path_buf(),
            reason: format!("line {}: {e}", i + 1),
        })?);
    }
    Ok(out)
}

/// Builds a backend from its descriptor; `mock` endpoints need a script.
pub fn build_backend(
    desc: LlmBackendDescriptor,
    script: Option<MockLlmScript>,
) -> Result<Box<dyn LlmBackend>, LlmError> {
    desc.validate()?;
    if desc.is_mock() {
        Ok(Box::new(MockLlmBackend::new(desc, script.unwrap_or_default())))
    } else {
        Ok(Box::new(HttpLlmBackend::new(desc)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{normalize_text, Review, Store};
    use crate::hypotheses::builtin_domain_mh;
    use crate::nli::PseudoLabeled;

    fn corpus(n: usize) -> ReviewCorpus {
        let reviews = (0..n)
            .map(|i| Review {
                id: format!("r{i}"),
                app_name: "Calm".into(),
                store: Store::GooglePlay,
                rating: 1,
                text_raw: format!("Review number {i}!"),
                text_norm: Some(normalize_text(&format!("Review number {i}!"))),
                submitted_at: None,
                gold_label: None,
            })
            .collect();
        ReviewCorpus::from_reviews("mem", reviews)
    }

    fn all_candidates(c: &ReviewCorpus) -> PseudoLabeling {
        PseudoLabeling {
            set_hash: String::new(),
            entries: c
                .iter()
                .map(|r| PseudoLabeled {
                    review_id: r.id.clone(),
                    label: PseudoLabel::MaybePrivacy,
                    fired_rule: Some(0),
                    triggered: vec![],
                })
                .collect(),
        }
    }

    fn prompt() -> PromptMessages {
        PromptMessages {
            system: "sys".into(),
            user: "they sell my data".into(),
        }
    }

    fn script(entries: &[(&str, &[&str])]) -> MockLlmScript {
        MockLlmScript::new(
            entries
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        )
    }

    #[test]
    fn settings_defaults_and_validation() {
        let s = SamplingSettings::default();
        assert_eq!((s.temperature, s.top_p, s.num_samples), (0.3, 0.9, 5));
        assert!(s.validate().is_ok());
        assert!(SamplingSettings { num_samples: 4, ..s }.validate().is_err());
        assert!(SamplingSettings { num_samples: 0, ..s }.validate().is_err());
        assert!(SamplingSettings { top_p: 0.0, ..s }.validate().is_err());
        assert!(SamplingSettings { top_p: 1.0, ..s }.validate().is_ok());
        assert!(SamplingSettings { temperature: -0.1, ..s }.validate().is_err());
    }

    #[test]
    fn classify_review_scripted() {
        let b = MockLlmBackend::new(
            LlmBackendDescriptor::mock("m"),
            script(&[("a", &["yes", "no", "Yes.", "no", "yes, clearly"]), ("b", &["no"])]),
        );
        let s = SamplingSettings::default();
        let rec = classify_review(&b, "a", &prompt(), &s).unwrap();
        assert_eq!(rec.decision, BinaryLabel::Yes);
        assert_eq!(rec.raw_responses.len(), 5);
        assert_eq!(rec.tally(), (3, 2, 0));
        let rec = classify_review(&b, "b", &prompt(), &s).unwrap();
        assert_eq!((rec.decision, rec.tie_flag), (BinaryLabel::No, false));
        assert_eq!(b.calls(), 10);

        let one = SamplingSettings { num_samples: 1, ..s };
        let rec = classify_review(&b, "a", &prompt(), &one).unwrap();
        assert_eq!(rec.votes, vec![Vote::Yes]);
        assert_eq!(rec.decision, BinaryLabel::Yes);
    }

    #[test]
    fn requests_carry_sampling_settings() {
        let b = MockLlmBackend::new(LlmBackendDescriptor::mock("m"), MockLlmScript::default());
        classify_review(&b, "x", &prompt(), &SamplingSettings::default()).unwrap();
        let req = b.last_request().unwrap();
        assert_eq!(req.temperature, 0.3);
        assert_eq!(req.top_p, 0.9);
        assert_eq!(req.messages[0].role, "system");
        assert_eq!(req.messages[1].content, "they sell my data");
    }

    #[test]
    fn classify_corpus_counts_and_failures() {
        let c = corpus(10);
        let mut entries: Vec<(String, Vec<String>)> = Vec::new();
        for i in 0..10 {
            let resp: &[&str] = match i {
                0..=5 => &["yes", "yes", "no", "yes", "no"],
                6 => &[ERROR_RESPONSE],
                _ => &["no"],
            };
            entries.push((format!("r{i}"), resp.iter().map(|s| s.to_string()).collect()));
        }
        let b = MockLlmBackend::new(LlmBackendDescriptor::mock("m"), MockLlmScript::new(entries.into_iter().collect()));
        let set = builtin_domain_mh();
        let out = classify_corpus(&b, &c, &all_candidates(&c), &set, &PromptTemplate::default(), &SamplingSettings::default(), None).unwrap();
        assert_eq!(out.yes(), 6);
        assert_eq!(out.no(), 3);
        assert_eq!(out.failures.len(), 1);
        assert_eq!(out.failures[0].review_id, "r6");
        assert_eq!(out.yes() + out.no() + out.failures.len(), 10);
        let ids: Vec<_> = out.records.iter().map(|r| r.review_id.as_str()).collect();
        assert_eq!(ids, ["r0", "r1", "r2", "r3", "r4", "r5", "r7", "r8", "r9"]);
    }

    #[test]
    fn classify_corpus_empty_and_precondition() {
        let b = MockLlmBackend::new(LlmBackendDescriptor::mock("m"), MockLlmScript::default());
        let set = builtin_domain_mh();
        let t = PromptTemplate::default();
        let s = SamplingSettings::default();
        let empty = corpus(0);
        let out = classify_corpus(&b, &empty, &all_candidates(&empty), &set, &t, &s, None).unwrap();
        assert!(out.records.is_empty() && out.failures.is_empty());

        let c = corpus(2);
        let mut labels = all_candidates(&c);
        labels.entries[1].label = PseudoLabel::Undetermined;
        assert!(matches!(
            classify_corpus(&b, &c, &labels, &set, &t, &s, None),
            Err(LlmError::NotCandidate(id)) if id == "r1"
        ));
        let sub = maybe_privacy_subset(&c, &labels);
        assert_eq!(sub.len(), 1);
        assert!(classify_corpus(&b, &sub, &labels, &set, &t, &s, None).is_ok());
    }

    #[test]
    fn vote_cache_skips_backend_on_rerun() {
        let c = corpus(4);
        let labels = all_candidates(&c);
        let set = builtin_domain_mh();
        let t = PromptTemplate::default();
        let s = SamplingSettings::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.jsonl");
        let desc = LlmBackendDescriptor::mock("m");
        let key = VoteCache::context_key(&desc, &t.system_message(&set).unwrap(), &s);

        let b = MockLlmBackend::new(desc.clone(), script(&[("r1", &[ERROR_RESPONSE])]));
        let cache = VoteCache::open(&path, key.clone()).unwrap();
        let first = classify_corpus(&b, &c, &labels, &set, &t, &s, Some(&cache)).unwrap();
        assert_eq!(first.failures.len(), 1);
        drop(cache);

        let b2 = MockLlmBackend::new(desc, MockLlmScript::default());
        let cache = VoteCache::open(&path, key).unwrap();
        assert_eq!(cache.len(), 3);
        let second = classify_corpus(&b2, &c, &labels, &set, &t, &s, Some(&cache)).unwrap();
        assert_eq!(b2.calls(), 5);
        assert!(second.failures.is_empty());
        assert_eq!(second.records.len(), 4);
    }
}
