//! Text → fixed-dimension embedding providers.
//!
//! Two providers share the [`EmbeddingProvider`] contract: a client for an
//! HTTP transformer sidecar ([`remote::RemoteProvider`]) and a deterministic
//! offline hashed n-gram projection ([`fallback::FallbackProvider`]).
//! [`cache::CachedProvider`] wraps either with an append-only vector cache.

pub mod cache;
pub mod fallback;
pub mod remote;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{CachedProvider, EmbeddingCache};
pub use fallback::{fallback_embed, FallbackProvider};
pub use remote::{remote_embed_chunk, RemoteProvider, RetryPolicy};

pub const DEFAULT_DIMENSION: usize = 768;
pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Environment variable consulted for the sidecar endpoint.
pub const ENDPOINT_ENV: &str = "CREDSCAN_ENDPOINT";

/// A finite real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::domain("embedding vectors must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("embedding component {i} is not finite")));
        }
        Ok(EmbeddingVector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        EmbeddingVector(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        self.dot(other) / (self.norm() * other.norm())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

/// Component-wise mean of token vectors.
pub fn mean_pool(vectors: &[EmbeddingVector]) -> Result<EmbeddingVector> {
    let first = vectors.first().ok_or_else(|| Error::domain("cannot mean-pool zero vectors"))?;
    let dim = first.dim();
    let mut acc = vec![0.0; dim];
    for v in vectors {
        if v.dim() != dim {
            return Err(Error::domain(format!("dimension mismatch: {} vs {dim}", v.dim())));
        }
        for (a, x) in acc.iter_mut().zip(v.as_slice()) {
            *a += x;
        }
    }
    let n = vectors.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    EmbeddingVector::new(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Remote,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub model_name: String,
    pub dimension: usize,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self::fallback()
    }
}

impl ProviderSpec {
    pub fn fallback() -> Self {
        ProviderSpec {
            kind: ProviderKind::Fallback,
            model_name: "hashed-ngram".into(),
            dimension: DEFAULT_DIMENSION,
            batch_size: DEFAULT_BATCH_SIZE,
            endpoint_url: None,
        }
    }

    pub fn remote(model_name: &str, endpoint_url: &str) -> Self {
        ProviderSpec {
            kind: ProviderKind::Remote,
            model_name: model_name.into(),
            dimension: DEFAULT_DIMENSION,
            batch_size: DEFAULT_BATCH_SIZE,
            endpoint_url: Some(endpoint_url.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 || self.batch_size == 0 {
            return Err(Error::domain("provider dimension and batch_size must be positive"));
        }
        if self.kind == ProviderKind::Remote && self.endpoint_url.is_none() {
            return Err(Error::domain("remote provider requires an endpoint_url"));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn EmbeddingProvider>> {
        self.validate()?;
        Ok(match self.kind {
            ProviderKind::Fallback => Box::new(FallbackProvider::new(self.clone())?),
            ProviderKind::Remote => Box::new(RemoteProvider::new(self.clone())?),
        })
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn spec(&self) -> &ProviderSpec;

    /// Embeds one chunk (at most `batch_size` texts). `chunk_index` is
    /// carried into transport errors.
    fn embed_chunk(&self, texts: &[String], chunk_index: usize) -> Result<Vec<EmbeddingVector>>;

    fn dimension(&self) -> usize {
        self.spec().dimension
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn spec(&self) -> &ProviderSpec {
        (**self).spec()
    }

    fn embed_chunk(&self, texts: &[String], chunk_index: usize) -> Result<Vec<EmbeddingVector>> {
        (**self).embed_chunk(texts, chunk_index)
    }
}

fn check_chunk(out: &[EmbeddingVector], expected: usize, dim: usize) -> Result<()> {
    if out.len() != expected {
        return Err(Error::Protocol(format!("expected {expected} vectors, got {}", out.len())));
    }
    if let Some(v) = out.iter().find(|v| v.dim() != dim) {
        return Err(Error::Protocol(format!("expected dimension {dim}, got {}", v.dim())));
    }
    Ok(())
}

/// Embeds `texts` in chunks of the provider's batch size, preserving order.
pub fn embed_batch<P: EmbeddingProvider + ?Sized>(texts: &[String], provider: &P) -> Result<Vec<EmbeddingVector>> {
    if texts.iter().any(|t| t.is_empty()) {
        return Err(Error::domain("cannot embed an empty text"));
    }
    let spec = provider.spec();
    let mut out = Vec::with_capacity(texts.len());
    for (i, chunk) in texts.chunks(spec.batch_size).enumerate() {
        let vectors = provider.embed_chunk(chunk, i)?;
        check_chunk(&vectors, chunk.len(), spec.dimension)?;
        out.extend(vectors);
    }
    Ok(out)
}

/// Like [`embed_batch`] but a failed chunk leaves `None` for its texts
/// instead of aborting. Returns the vectors and the number of failed chunks.
pub fn embed_batch_lenient<P: EmbeddingProvider + ?Sized>(
    texts: &[String],
    provider: &P,
) -> (Vec<Option<EmbeddingVector>>, usize) {
    let spec = provider.spec();
    let mut out = Vec::with_capacity(texts.len());
    let mut failures = 0;
    for (i, chunk) in texts.chunks(spec.batch_size).enumerate() {
        let result = if chunk.iter().any(|t| t.is_empty()) {
            Err(Error::domain("cannot embed an empty text"))
        } else {
            provider
                .embed_chunk(chunk, i)
                .and_then(|v| check_chunk(&v, chunk.len(), spec.dimension).map(|_| v))
        };
        match result {
            Ok(vectors) => out.extend(vectors.into_iter().map(Some)),
            Err(e) => {
                log::warn!("embedding chunk {i} failed: {e}");
                failures += 1;
                out.extend(std::iter::repeat_n(None, chunk.len()));
            }
        }
    }
    (out, failures)
}
