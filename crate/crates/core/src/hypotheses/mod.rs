//! Hypothesis taxonomies and the threshold-count rule systems that turn
//! entailment scores into pseudo-labels.
//!
//! Two sets ship built in: the 31-hypothesis generic privacy set and the
//! 21-hypothesis mental-health domain set. Custom sets load from JSON:
//!
//! ```json
//! {"set_id": "...", "name": "...",
//!  "hypotheses": [{"id": 1, "concept": "...", "text": "...", "source": "custom"}],
//!  "heuristics": {"positive_rules": [[0.85, 1]], "negative_rule": [0.4] | null,
//!                 "default_label": "maybe_not_privacy"}}
//! ```

mod builtin;

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const GENERIC_SET_ID: &str = "generic";
pub const MH_DOMAIN_SET_ID: &str = "mh_domain";

#[derive(Debug, Error)]
pub enum HypothesisError {
    #[error("cannot read hypothesis set {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("hypothesis set schema violation: {0}")]
    Schema(#[from] serde_json::Error),
    #[error("hypothesis set {set_id:?} is empty")]
    Empty { set_id: String },
    #[error("duplicate hypothesis id {0}")]
    DuplicateId(u32),
    #[error("hypothesis {0} has empty text")]
    EmptyText(u32),
    #[error("rule threshold {0} must lie strictly between 0 and 1")]
    Threshold(f64),
    #[error("rule count {count} must be between 1 and the set size {size}")]
    Count { count: usize, size: usize },
    #[error("unknown builtin hypothesis set {0:?}")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Solove,
    WangKobsa,
    Iwaya,
    Generic,
    Custom,
}

/// Heuristic outcome for one review.
///
/// Ordered so that `MaybeNotPrivacy < Undetermined < MaybePrivacy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabel {
    MaybeNotPrivacy,
    Undetermined,
    MaybePrivacy,
}

impl PseudoLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            PseudoLabel::MaybePrivacy => "maybe_privacy",
            PseudoLabel::MaybeNotPrivacy => "maybe_not_privacy",
            PseudoLabel::Undetermined => "undetermined",
        }
    }
}

impl fmt::Display for PseudoLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: u32,
    pub concept: String,
    pub text: String,
    pub source: Source,
}

/// `N_E(t) >= min_count` clause: at least `min_count` hypotheses score above `threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, usize)", into = "(f64, usize)")]
pub struct PositiveRule {
    pub threshold: f64,
    pub min_count: usize,
}

impl From<(f64, usize)> for PositiveRule {
    fn from((threshold, min_count): (f64, usize)) -> Self {
        PositiveRule { threshold, min_count }
    }
}

impl From<PositiveRule> for (f64, usize) {
    fn from(r: PositiveRule) -> Self {
        (r.threshold, r.min_count)
    }
}

/// `N_E(t) == 0` clause.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64,)", into = "(f64,)")]
pub struct NegativeRule {
    pub threshold: f64,
}

impl From<(f64,)> for NegativeRule {
    fn from((threshold,): (f64,)) -> Self {
        NegativeRule { threshold }
    }
}

impl From<NegativeRule> for (f64,) {
    fn from(r: NegativeRule) -> Self {
        (r.threshold,)
    }
}

/// Positive rules are OR-ed and checked first, then the negative rule, then
/// the default label applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicRuleSet {
    pub positive_rules: Vec<PositiveRule>,
    pub negative_rule: Option<NegativeRule>,
    pub default_label: PseudoLabel,
}

impl HeuristicRuleSet {
    pub fn generic() -> Self {
        HeuristicRuleSet {
            positive_rules: [(0.8, 1), (0.7, 3), (0.6, 5), (0.5, 7)]
                .into_iter()
                .map(PositiveRule::from)
                .collect(),
            negative_rule: Some(NegativeRule { threshold: 0.4 }),
            default_label: PseudoLabel::Undetermined,
        }
    }

    pub fn mh_domain() -> Self {
        HeuristicRuleSet {
            positive_rules: [(0.85, 1), (0.75, 3), (0.7, 5)]
                .into_iter()
                .map(PositiveRule::from)
                .collect(),
            negative_rule: None,
            default_label: PseudoLabel::MaybeNotPrivacy,
        }
    }

    /// Checks thresholds lie in (0, 1) and every count fits `n_hypotheses`.
    pub fn validate(&self, n_hypotheses: usize) -> Result<(), HypothesisError> {
        let thresholds = self
            .positive_rules
            .iter()
            .map(|r| r.threshold)
            .chain(self.negative_rule.map(|r| r.threshold));
        for t in thresholds {
            if !(t > 0.0 && t < 1.0) {
                return Err(HypothesisError::Threshold(t));
            }
        }
        for r in &self.positive_rules {
            if r.min_count == 0 || r.min_count > n_hypotheses {
                return Err(HypothesisError::Count {
                    count: r.min_count,
                    size: n_hypotheses,
                });
            }
        }
        Ok(())
    }

    /// Labels this rule set can ever emit.
    pub fn reachable_labels(&self) -> Vec<PseudoLabel> {
        let mut labels = Vec::new();
        if !self.positive_rules.is_empty() {
            labels.push(PseudoLabel::MaybePrivacy);
        }
        if self.negative_rule.is_some() {
            labels.push(PseudoLabel::MaybeNotPrivacy);
        }
        if !labels.contains(&self.default_label) {
            labels.push(self.default_label);
        }
        labels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    pub set_id: String,
    pub name: String,
    pub hypotheses: Vec<Hypothesis>,
    pub heuristics: HeuristicRuleSet,
    #[serde(skip)]
    version_hash: String,
}

impl HypothesisSet {
    /// Validates and computes the version hash.
    pub fn new(
        set_id: impl Into<String>,
        name: impl Into<String>,
        hypotheses: Vec<Hypothesis>,
        heuristics: HeuristicRuleSet,
    ) -> Result<Self, HypothesisError> {
        let mut set = HypothesisSet {
            set_id: set_id.into(),
            name: name.into(),
            hypotheses,
            heuristics,
            version_hash: String::new(),
        };
        set.validate()?;
        set.version_hash = set.compute_hash();
        Ok(set)
    }

    fn validate(&self) -> Result<(), HypothesisError> {
        if self.hypotheses.is_empty() {
            return Err(HypothesisError::Empty {
                set_id: self.set_id.clone(),
            });
        }
        let mut ids = HashSet::new();
        for h in &self.hypotheses {
            if !ids.insert(h.id) {
                return Err(HypothesisError::DuplicateId(h.id));
            }
            if h.text.trim().is_empty() {
                return Err(HypothesisError::EmptyText(h.id));
            }
        }
        self.heuristics.validate(self.hypotheses.len())
    }

    /// Hex SHA-256 over the canonical JSON of ids, texts, concepts and rules.
    fn compute_hash(&self) -> String {
        let canonical = serde_json::to_vec(&(
            &self.set_id,
            &self.name,
            &self.hypotheses,
            &self.heuristics,
        ))
        .expect("hypothesis set serializes");
        let digest = Sha256::digest(&canonical);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn version_hash(&self) -> &str {
        &self.version_hash
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.id == id)
    }

    /// Pairs of hypothesis ids that share identical text.
    pub fn duplicate_texts(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (i, a) in self.hypotheses.iter().enumerate() {
            for b in &self.hypotheses[i + 1..] {
                if a.text == b.text {
                    out.push((a.id, b.id));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hypothesis set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HypothesisError> {
        let raw: HypothesisSet = serde_json::from_str(s)?;
        let set = HypothesisSet::new(raw.set_id, raw.name, raw.hypotheses, raw.heuristics)?;
        for (a, b) in set.duplicate_texts() {
            log::warn!(
                "hypothesis set {:?}: hypotheses {a} and {b} have identical text",
                set.set_id
            );
        }
        Ok(set)
    }
}

fn from_table(table: &[(&str, &str, Source)]) -> Vec<Hypothesis> {
    table
        .iter()
        .enumerate()
        .map(|(i, &(concept, text, source))| Hypothesis {
            id: i as u32 + 1,
            concept: concept.to_string(),
            text: text.to_string(),
            source,
        })
        .collect()
}

/// The 31 generic privacy hypotheses with their three-way heuristics.
pub fn builtin_generic() -> HypothesisSet {
    HypothesisSet::new(
        GENERIC_SET_ID,
        "Generic privacy hypotheses",
        from_table(&builtin::GENERIC),
        HeuristicRuleSet::generic(),
    )
    .expect("builtin generic set is valid")
}

/// The 21 mental-health domain hypotheses with binary heuristics.
pub fn builtin_domain_mh() -> HypothesisSet {
    HypothesisSet::new(
        MH_DOMAIN_SET_ID,
        "Mental-health domain privacy hypotheses",
        from_table(&builtin::MH_DOMAIN),
        HeuristicRuleSet::mh_domain(),
    )
    .expect("builtin domain set is valid")
}

pub fn builtin(set_id: &str) -> Result<HypothesisSet, HypothesisError> {
    match set_id {
        GENERIC_SET_ID => Ok(builtin_generic()),
        MH_DOMAIN_SET_ID | "domain" | "mh" => Ok(builtin_domain_mh()),
        other => Err(HypothesisError::UnknownBuiltin(other.to_string())),
    }
}

pub fn load_hypothesis_set(path: &Path) -> Result<HypothesisSet, HypothesisError> {
    let s = std::fs::read_to_string(path).map_err(|source| HypothesisError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    HypothesisSet::from_json(&s)
}

/// Resolves a builtin id or, failing that, a path to a set file.
pub fn resolve(spec: &str) -> Result<HypothesisSet, HypothesisError> {
    match builtin(spec) {
        Ok(set) => Ok(set),
        Err(HypothesisError::UnknownBuiltin(_)) if Path::new(spec).exists() => {
            load_hypothesis_set(Path::new(spec))
        }
        Err(e) => Err(e),
    }
}
