use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EntailmentScore, NliBackend, NliBackendDescriptor, NliError};
use crate::backend::BackendError;
use crate::hypotheses::Hypothesis;

/// Field names on the wire. Defaults follow the documented contract
/// `{premise, hypothesis} -> {entailment, neutral, contradiction}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NliFieldMap {
    pub premise: String,
    pub hypothesis: String,
    pub entailment: String,
    pub neutral: String,
    pub contradiction: String,
}

impl Default for NliFieldMap {
    fn default() -> Self {
        NliFieldMap {
            premise: "premise".into(),
            hypothesis: "hypothesis".into(),
            entailment: "entailment".into(),
            neutral: "neutral".into(),
            contradiction: "contradiction".into(),
        }
    }
}

pub struct HttpNliBackend {
    desc: NliBackendDescriptor,
    client: reqwest::blocking::Client,
}

impl HttpNliBackend {
    pub fn new(desc: NliBackendDescriptor) -> Result<Self, NliError> {
        desc.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(desc.timeout_secs))
            .build()
            .map_err(|e| NliError::InvalidDescriptor(e.to_string()))?;
        Ok(HttpNliBackend { desc, client })
    }

    fn parse(&self, body: &serde_json::Value) -> Result<EntailmentScore, BackendError> {
        let f = &self.desc.fields;
        let num = |key: &str| -> Result<Option<f64>, BackendError> {
            match body.get(key) {
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(v) => v
                    .as_f64()
                    .map(Some)
                    .ok_or_else(|| BackendError::Malformed(format!("field {key:?} is not a number"))),
            }
        };
        let entail = num(&f.entailment)?
            .ok_or_else(|| BackendError::Malformed(format!("missing field {:?}", f.entailment)))?;
        EntailmentScore::new(entail, num(&f.neutral)?, num(&f.contradiction)?)
            .map_err(|e| BackendError::Malformed(e.to_string()))
    }
}

impl NliBackend for HttpNliBackend {
    fn descriptor(&self) -> &NliBackendDescriptor {
        &self.desc
    }

    fn infer(&self, premise: &str, hypothesis: &Hypothesis) -> Result<EntailmentScore, BackendError> {
        let mut req = serde_json::Map::new();
        req.insert(self.desc.fields.premise.clone(), premise.into());
        req.insert(self.desc.fields.hypothesis.clone(), hypothesis.text.clone().into());
        let resp = self
            .client
            .post(&self.desc.endpoint)
            .json(&req)
            .send()
            .map_err(BackendError::from_reqwest)?;
        let status = resp.status();
        let text = resp.text().map_err(BackendError::from_reqwest)?;
        if !status.is_success() {
            return Err(BackendError::from_status(status, &text));
        }
        let body: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        self.parse(&body)
    }
}
