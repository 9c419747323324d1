use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LlmError;
use crate::corpus::Review;
use crate::hypotheses::HypothesisSet;

pub const HYPOTHESES_PLACEHOLDER: &str = "{hypotheses}";

const BUILTIN_V1: &str = include_str!("../../assets/prompt_v1.txt");

/// System-message template. `{hypotheses}` expands to the numbered list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            version: "builtin-v1".to_string(),
            text: BUILTIN_V1.trim_end().to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(version: impl Into<String>, text: impl Into<String>) -> Result<Self, LlmError> {
        let text = text.into().trim_end().to_string();
        if text.matches(HYPOTHESES_PLACEHOLDER).count() != 1 {
            return Err(LlmError::Template(format!(
                "template must contain {HYPOTHESES_PLACEHOLDER} exactly once"
            )));
        }
        Ok(PromptTemplate {
            version: version.into(),
            text,
        })
    }

    /// Loads a plain-text template; the file name stem becomes its version.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Template(format!("{}: {e}", path.display())))?;
        let version = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("custom")
            .to_string();
        PromptTemplate::new(version, text)
    }

    /// Short digest of the template text, part of the vote cache key.
    pub fn digest(&self) -> String {
        let d = Sha256::digest(self.text.as_bytes());
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn system_message(&self, set: &HypothesisSet) -> Result<String, LlmError> {
        if set.is_empty() {
            return Err(LlmError::EmptyHypothesisSet);
        }
        let list = set
            .hypotheses
            .iter()
            .map(|h| format!("{}. {}", h.id, h.text))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(self.text.replace(HYPOTHESES_PLACEHOLDER, &list))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMessages {
    pub system: String,
    pub user: String,
}

/// System message from the template and hypothesis list; user message is
/// the (normalized) review text verbatim.
pub fn build_prompt(template: &PromptTemplate, set: &HypothesisSet, review: &Review) -> Result<PromptMessages, LlmError> {
    Ok(PromptMessages {
        system: template.system_message(set)?,
        user: review.normalized().into_owned(),
    })
}
