use std::time::Duration;

use super::{ChatRequest, LlmBackend, LlmBackendDescriptor, LlmError, SampleContext};
use crate::backend::BackendError;

/// Client for an OpenAI-style `/chat/completions` endpoint.
pub struct HttpLlmBackend {
    desc: LlmBackendDescriptor,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpLlmBackend {
    pub fn new(desc: LlmBackendDescriptor) -> Result<Self, LlmError> {
        desc.validate()?;
        let api_key = match &desc.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                LlmError::InvalidDescriptor(format!("{}: environment variable {var} is not set", desc.name))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(desc.timeout_secs))
            .build()
            .map_err(|e| LlmError::InvalidDescriptor(e.to_string()))?;
        Ok(HttpLlmBackend { desc, client, api_key })
    }
}

fn extract_content(body: &serde_json::Value) -> Result<String, BackendError> {
    body.pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("missing choices[0].message.content".into()))
}

impl LlmBackend for HttpLlmBackend {
    fn descriptor(&self) -> &LlmBackendDescriptor {
        &self.desc
    }

    fn complete(&self, request: &ChatRequest, _ctx: SampleContext<'_>) -> Result<String, BackendError> {
        let mut req = self.client.post(&self.desc.endpoint).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(BackendError::from_reqwest)?;
        let status = resp.status();
        let text = resp.text().map_err(BackendError::from_reqwest)?;
        if !status.is_success() {
            return Err(BackendError::from_status(status, &text));
        }
        let body: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        extract_content(&body)
    }
}
