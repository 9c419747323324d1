use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{sha256_hex, PipelineError};
use crate::corpus::{ingest_reviews, InputFormat, Ingested};
use crate::hypotheses::{self, HypothesisSet};
use crate::llm::{self, LlmBackend, LlmBackendDescriptor, MockLlmScript, PromptTemplate, SamplingSettings};
use crate::nli::{self, MockNliTable, NliBackend, NliBackendDescriptor};

/// A value given inline or as a path to a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Inline<T> {
    Path(PathBuf),
    Value(T),
}

impl<T: DeserializeOwned + Clone> Inline<T> {
    pub fn load(&self, base: &Path) -> Result<T, PipelineError> {
        match self {
            Inline::Value(v) => Ok(v.clone()),
            Inline::Path(p) => {
                let p = base.join(p);
                let s = std::fs::read_to_string(&p).map_err(PipelineError::io(&p))?;
                serde_json::from_str(&s).map_err(|e| PipelineError::Config(format!("{}: {e}", p.display())))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub path: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<InputFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_rating: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rating: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliBackendConfig {
    #[serde(flatten)]
    pub descriptor: NliBackendDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_table: Option<Inline<MockNliTable>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliConfig {
    pub backends: Vec<NliBackendConfig>,
    /// Backend used by extraction; defaults to the first.
    #[serde(rename = "use", default, skip_serializing_if = "Option::is_none")]
    pub use_backend: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesesConfig {
    /// Builtin ids or file paths. The first set is the comparison baseline.
    pub sets: Vec<String>,
    /// Set used by extraction; defaults to the first.
    #[serde(rename = "use", default, skip_serializing_if = "Option::is_none")]
    pub use_set: Option<String>,
}

impl Default for HypothesesConfig {
    fn default() -> Self {
        HypothesesConfig {
            sets: vec![hypotheses::GENERIC_SET_ID.into(), hypotheses::MH_DOMAIN_SET_ID.into()],
            use_set: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    #[serde(flatten)]
    pub descriptor: LlmBackendDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_script: Option<Inline<MockLlmScript>>,
}

/// Annotator roster. The lead labels every review; the others split the
/// queue round-robin, so each review is labeled exactly twice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationConfig {
    pub annotators: Vec<String>,
    /// Defaults to the first annotator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead: Option<String>,
    /// Breaks every disagreement. When absent, the first roster member not
    /// involved in the disagreement does.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tiebreaker: Option<String>,
    /// Canned answers per annotator and review id, for unattended sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    /// Session state file; defaults to `annotation_session.json` in the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<PathBuf>,
}

impl AnnotationConfig {
    pub fn lead(&self) -> &str {
        self.lead.as_deref().unwrap_or_else(|| &self.annotators[0])
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(format!("annotation: {m}")));
        if self.annotators.len() < 2 {
            return err("at least two annotators are required".into());
        }
        let mut seen = std::collections::HashSet::new();
        for a in &self.annotators {
            if a.trim().is_empty() || !seen.insert(a) {
                return err(format!("annotator ids must be unique and non-empty (got {a:?})"));
            }
        }
        if let Some(l) = &self.lead {
            if !self.annotators.contains(l) {
                return err(format!("lead {l:?} is not in the roster"));
            }
        }
        if self.annotators.len() == 2 && self.tiebreaker.is_none() {
            return err("two annotators need an explicit tiebreaker".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Defaults to `cache` inside the output directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// Unlabeled corpus for extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusConfig>,
    /// Gold-labeled corpus for selection and evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labeled_corpus: Option<CorpusConfig>,
    pub nli: NliConfig,
    #[serde(default)]
    pub hypotheses: HypothesesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm: Option<LlmConfig>,
    #[serde(default)]
    pub sampling: SamplingSettings,
    /// Prompt template file; the builtin template when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<AnnotationConfig>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("run")
}

/// Command-line overrides applied on top of a config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CliOverrides {
    pub hypotheses: Option<String>,
    pub nli_endpoint: Option<String>,
    pub llm_endpoint: Option<String>,
    pub seed: Option<u64>,
    pub max_inflight: Option<usize>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let s = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        let mut cfg = Self::from_json(&s)?;
        cfg.base_dir = path
            .parent()
            .filter(|d| !d.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig = serde_json::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.nli.backends.is_empty() {
            return Err(PipelineError::Config("at least one NLI backend is required".into()));
        }
        let mut names = std::collections::HashSet::new();
        for b in &self.nli.backends {
            if !names.insert(&b.descriptor.name) {
                return Err(PipelineError::Config(format!("duplicate NLI backend {:?}", b.descriptor.name)));
            }
            b.descriptor.validate()?;
        }
        if let Some(u) = &self.nli.use_backend {
            if !names.contains(u) {
                return Err(PipelineError::Config(format!("nli.use names unknown backend {u:?}")));
            }
        }
        if self.hypotheses.sets.is_empty() {
            return Err(PipelineError::Config("at least one hypothesis set is required".into()));
        }
        if let Some(u) = &self.hypotheses.use_set {
            if !self.hypotheses.sets.contains(u) {
                return Err(PipelineError::Config(format!("hypotheses.use {u:?} is not listed in hypotheses.sets")));
            }
        }
        if let Some(l) = &self.llm {
            l.descriptor.validate()?;
        }
        self.sampling.validate()?;
        if let Some(a) = &self.annotation {
            a.validate()?;
        }
        Ok(())
    }

    pub fn apply(&mut self, o: &CliOverrides) -> Result<(), PipelineError> {
        if let Some(h) = &o.hypotheses {
            if !self.hypotheses.sets.contains(h) {
                self.hypotheses.sets.push(h.clone());
            }
            self.hypotheses.use_set = Some(h.clone());
        }
        if let Some(e) = &o.nli_endpoint {
            let name = self.nli_backend()?.descriptor.name.clone();
            for b in &mut self.nli.backends {
                if b.descriptor.name == name {
                    b.descriptor.endpoint = e.clone();
                }
            }
        }
        if let Some(e) = &o.llm_endpoint {
            let llm = self
                .llm
                .as_mut()
                .ok_or_else(|| PipelineError::Config("--llm-endpoint given but no llm backend configured".into()))?;
            llm.descriptor.endpoint = e.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.max_inflight {
            for b in &mut self.nli.backends {
                b.descriptor.max_inflight = n;
            }
            if let Some(l) = &mut self.llm {
                l.descriptor.max_inflight = n;
            }
        }
        self.validate()
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve_path(&self.output_dir)
    }

    pub fn cache_dir(&self) -> PathBuf {
        match &self.cache_dir {
            Some(c) => self.resolve_path(c),
            None => self.output_dir().join("cache"),
        }
    }

    /// SHA-256 over the canonical JSON of the effective configuration.
    pub fn digest(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn nli_backend(&self) -> Result<&NliBackendConfig, PipelineError> {
        match &self.nli.use_backend {
            Some(u) => self.nli.backends.iter().find(|b| &b.descriptor.name == u),
            None => self.nli.backends.first(),
        }
        .ok_or_else(|| PipelineError::Config("no NLI backend configured".into()))
    }

    /// Instantiates a configured NLI backend. Mock tables take the run seed.
    pub fn build_nli(&self, b: &NliBackendConfig) -> Result<Box<dyn NliBackend>, PipelineError> {
        let table = match &b.mock_table {
            Some(t) => Some(t.load(&self.base_dir)?),
            None if b.descriptor.is_mock() => Some(MockNliTable::default()),
            None => None,
        }
        .map(|mut t| {
            t.seed = self.seed;
            t
        });
        Ok(nli::build_backend(b.descriptor.clone(), table)?)
    }

    pub fn build_llm(&self) -> Result<Box<dyn LlmBackend>, PipelineError> {
        let l = self
            .llm
            .as_ref()
            .ok_or_else(|| PipelineError::Config("no llm backend configured".into()))?;
        let script = l.mock_script.as_ref().map(|s| s.load(&self.base_dir)).transpose()?;
        Ok(llm::build_backend(l.descriptor.clone(), script)?)
    }

    pub fn load_set(&self, spec: &str) -> Result<HypothesisSet, PipelineError> {
        match hypotheses::builtin(spec) {
            Ok(s) => Ok(s),
            Err(_) => Ok(hypotheses::load_hypothesis_set(&self.resolve_path(Path::new(spec)))?),
        }
    }

    pub fn sets(&self) -> Result<Vec<(String, HypothesisSet)>, PipelineError> {
        self.hypotheses
            .sets
            .iter()
            .map(|s| Ok((s.clone(), self.load_set(s)?)))
            .collect()
    }

    /// The set used by extraction, with its config name.
    pub fn extraction_set(&self) -> Result<(String, HypothesisSet), PipelineError> {
        let spec = self
            .hypotheses
            .use_set
            .clone()
            .unwrap_or_else(|| self.hypotheses.sets[0].clone());
        let set = self.load_set(&spec)?;
        Ok((spec, set))
    }

    pub fn template(&self) -> Result<PromptTemplate, PipelineError> {
        match &self.prompt_template {
            Some(p) => Ok(PromptTemplate::load(&self.resolve_path(p))?),
            None => Ok(PromptTemplate::default()),
        }
    }

    pub fn ingest(&self, c: &CorpusConfig) -> Result<Ingested, PipelineError> {
        let path = self.resolve_path(&c.path);
        let format = match c.format {
            Some(f) => f,
            None => InputFormat::from_path(&path).ok_or_else(|| {
                PipelineError::Config(format!("cannot infer the format of {}; set `format`", path.display()))
            })?,
        };
        Ok(ingest_reviews(&path, format)?)
    }
}
