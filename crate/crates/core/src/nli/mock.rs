use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EntailmentScore, NliBackend, NliBackendDescriptor};
use crate::backend::BackendError;
use crate::corpus::normalize_text;
use crate::hypotheses::Hypothesis;

/// A phrase that, when present in a premise, drives the listed hypotheses
/// to `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trigger {
    pub phrase: String,
    pub hypothesis_ids: Vec<u32>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockNliTable {
    pub triggers: Vec<Trigger>,
    pub default_score: f64,
    /// Half-width of the deterministic jitter added to every score.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for MockNliTable {
    fn default() -> Self {
        MockNliTable {
            triggers: Vec::new(),
            default_score: 0.05,
            jitter: 0.02,
            seed: 0,
        }
    }
}

impl MockNliTable {
    /// Entailment before jitter: the highest matching trigger score, else the default.
    pub fn base_score(&self, premise: &str, hypothesis_id: u32) -> f64 {
        let padded = format!(" {premise} ");
        self.triggers
            .iter()
            .filter(|t| t.hypothesis_ids.contains(&hypothesis_id))
            .filter(|t| {
                let p = normalize_text(&t.phrase);
                !p.is_empty() && padded.contains(&format!(" {p} "))
            })
            .map(|t| t.score)
            .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
            .unwrap_or(self.default_score)
    }

    /// Uniform offset in [-jitter, jitter] derived from the seed and the pair.
    fn offset(&self, premise: &str, hypothesis_id: u32) -> f64 {
        if self.jitter == 0.0 {
            return 0.0;
        }
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(hypothesis_id.to_le_bytes());
        h.update(premise.as_bytes());
        let d = h.finalize();
        let x = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        let unit = (x >> 11) as f64 / (1u64 << 53) as f64;
        (unit * 2.0 - 1.0) * self.jitter
    }

    pub fn score(&self, premise: &str, hypothesis_id: u32) -> f64 {
        (self.base_score(premise, hypothesis_id) + self.offset(premise, hypothesis_id)).clamp(0.0, 1.0)
    }
}

/// Offline backend answering from a [`MockNliTable`]. Counts calls so tests
/// can assert cache behaviour.
pub struct MockNliBackend {
    desc: NliBackendDescriptor,
    table: MockNliTable,
    calls: AtomicUsize,
}

impl MockNliBackend {
    pub fn new(desc: NliBackendDescriptor, table: MockNliTable) -> Self {
        MockNliBackend {
            desc,
            table,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn table(&self) -> &MockNliTable {
        &self.table
    }
}

impl NliBackend for MockNliBackend {
    fn descriptor(&self) -> &NliBackendDescriptor {
        &self.desc
    }

    fn infer(&self, premise: &str, hypothesis: &Hypothesis) -> Result<EntailmentScore, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let e = self.table.score(premise, hypothesis.id);
        let c = (1.0 - e) / 2.0;
        Ok(EntailmentScore {
            entail: e,
            neutral: Some(1.0 - e - c),
            contradict: Some(c),
        })
    }
}
