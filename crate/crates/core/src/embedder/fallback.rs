//! Offline embedder: signed feature hashing of byte n-grams.
//!
//! Every byte 1-, 2- and 3-gram of the text is hashed with 64-bit FNV-1a.
//! The hash modulo the dimension selects a bucket; bit 63 selects the sign
//! (set → −1). Bucket sums are L2-normalized. Output depends only on the
//! input bytes, so vectors are bitwise identical across runs and platforms.

use super::{EmbeddingProvider, EmbeddingVector, ProviderKind, ProviderSpec};
use crate::error::{Error, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub const NGRAM_ORDERS: [usize; 3] = [1, 2, 3];

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn fallback_embed(text: &str, dimension: usize) -> Result<EmbeddingVector> {
    if text.is_empty() {
        return Err(Error::domain("cannot embed an empty text"));
    }
    if dimension == 0 {
        return Err(Error::domain("dimension must be positive"));
    }
    let bytes = text.as_bytes();
    let mut acc = vec![0.0f64; dimension];
    for n in NGRAM_ORDERS {
        for gram in bytes.windows(n) {
            let h = fnv1a64(gram);
            let bucket = (h % dimension as u64) as usize;
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            acc[bucket] += sign;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // every signed contribution cancelled; fall back to a one-hot on the
        // whole-text hash so the output is still a unit vector
        acc[(fnv1a64(bytes) % dimension as u64) as usize] = 1.0;
    } else {
        acc.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector::new(acc)
}

#[derive(Debug, Clone, Default)]
pub struct FallbackProvider {
    spec: ProviderSpec,
}

impl FallbackProvider {
    pub fn new(spec: ProviderSpec) -> Result<Self> {
        spec.validate()?;
        if spec.kind != ProviderKind::Fallback {
            return Err(Error::domain("FallbackProvider needs a fallback provider spec"));
        }
        Ok(FallbackProvider { spec })
    }

    pub fn with_dimension(dimension: usize) -> Result<Self> {
        Self::new(ProviderSpec {
            dimension,
            ..ProviderSpec::fallback()
        })
    }
}

impl EmbeddingProvider for FallbackProvider {
    fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    fn embed_chunk(&self, texts: &[String], _chunk_index: usize) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| fallback_embed(t, self.spec.dimension)).collect()
    }
}
