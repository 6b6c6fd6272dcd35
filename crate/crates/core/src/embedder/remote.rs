//! Client half of the sidecar embedding protocol.
//!
//! ```text
//! POST /embed   {"model": "gpt2", "texts": ["..."]}
//!          200  {"model": "gpt2", "dim": 768, "vectors": [[...], ...]}
//! GET  /health  200 {"status": "ok", "models": ["bert-base", "gpt2"]}
//! ```

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EmbeddingVector, ProviderKind, ProviderSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub model: String,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub models: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    /// 3 attempts, 100 ms then 200 ms between them.
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(100),
        }
    }
}

pub struct RemoteProvider {
    spec: ProviderSpec,
    agent: ureq::Agent,
    retry: RetryPolicy,
}

impl RemoteProvider {
    pub fn new(spec: ProviderSpec) -> Result<Self> {
        Self::with_retry(spec, RetryPolicy::default())
    }

    pub fn with_retry(spec: ProviderSpec, retry: RetryPolicy) -> Result<Self> {
        spec.validate()?;
        if spec.kind != ProviderKind::Remote {
            return Err(Error::domain("RemoteProvider needs a remote provider spec"));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Ok(RemoteProvider {
            spec,
            agent,
            retry: RetryPolicy {
                attempts: retry.attempts.max(1),
                ..retry
            },
        })
    }

    fn url(&self, route: &str) -> String {
        let base = self.spec.endpoint_url.as_deref().unwrap_or_default();
        format!("{}/{route}", base.trim_end_matches('/'))
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let mut resp = self
            .agent
            .get(&self.url("health"))
            .call()
            .map_err(|e| transport(0, e))?;
        resp.body_mut()
            .read_json::<HealthResponse>()
            .map_err(|e| Error::Protocol(format!("bad /health body: {e}")))
    }

    fn post_once(&self, req: &EmbedRequest, chunk_index: usize) -> Result<EmbedResponse> {
        let mut resp = self
            .agent
            .post(&self.url("embed"))
            .send_json(req)
            .map_err(|e| transport(chunk_index, e))?;
        resp.body_mut()
            .read_json::<EmbedResponse>()
            .map_err(|e| Error::Protocol(format!("bad /embed body: {e}")))
    }

    fn post_with_retry(&self, req: &EmbedRequest, chunk_index: usize) -> Result<EmbedResponse> {
        let mut delay = self.retry.base_delay;
        let mut attempt = 1;
        loop {
            match self.post_once(req, chunk_index) {
                Err(e) if e.is_retryable() && attempt < self.retry.attempts => {
                    log::warn!("chunk {chunk_index} attempt {attempt} failed: {e}; retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

fn transport(chunk: usize, e: ureq::Error) -> Error {
    let message = match e {
        ureq::Error::StatusCode(code) => format!("HTTP status {code}"),
        other => other.to_string(),
    };
    Error::Transport { chunk, message }
}

impl EmbeddingProvider for RemoteProvider {
    fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn embed_chunk(&self, texts: &[String], chunk_index: usize) -> Result<Vec<EmbeddingVector>> {
        let req = EmbedRequest {
            model: self.spec.model_name.clone(),
            texts: texts.to_vec(),
        };
        let resp = self.post_with_retry(&req, chunk_index)?;
        if resp.dim != self.spec.dimension {
            return Err(Error::Protocol(format!(
                "sidecar returned dim {} but {} was expected",
                resp.dim, self.spec.dimension
            )));
        }
        if resp.vectors.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "sidecar returned {} vectors for {} texts",
                resp.vectors.len(),
                texts.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.spec.dimension {
                    return Err(Error::Protocol(format!(
                        "vector has {} components, expected {}",
                        v.len(),
                        self.spec.dimension
                    )));
                }
                EmbeddingVector::new(v).map_err(|e| Error::Protocol(e.to_string()))
            })
            .collect()
    }
}

/// One request for one chunk, with the default retry policy.
pub fn remote_embed_chunk(texts: &[String], spec: &ProviderSpec) -> Result<Vec<EmbeddingVector>> {
    RemoteProvider::new(spec.clone())?.embed_chunk(texts, 0)
}
