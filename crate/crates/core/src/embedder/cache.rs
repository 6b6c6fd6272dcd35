//! Append-only on-disk embedding cache.
//!
//! Each record is `u32 len | [u8; 32] key | u32 dim | dim × f64`, all
//! little-endian, where `len` counts the bytes after the length field and
//! `key` is SHA-256 over provider kind, model name, dimension and text.
//! A truncated trailing record (interrupted write) is dropped on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::{EmbeddingProvider, EmbeddingVector, ProviderSpec};
use crate::error::{Error, Result};

pub type CacheKey = [u8; 32];

pub fn cache_key(spec: &ProviderSpec, text: &str) -> CacheKey {
    let mut h = Sha256::new();
    h.update(format!("{:?}", spec.kind).as_bytes());
    h.update([0]);
    h.update(spec.model_name.as_bytes());
    h.update([0]);
    h.update((spec.dimension as u64).to_le_bytes());
    h.update(text.as_bytes());
    h.finalize().into()
}

pub struct EmbeddingCache {
    path: PathBuf,
    entries: RwLock<HashMap<CacheKey, EmbeddingVector>>,
    writer: Mutex<File>,
}

impl EmbeddingCache {
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut good_end = None;
        if path.exists() {
            let mut buf = Vec::new();
            File::open(path)
                .and_then(|mut f| f.read_to_end(&mut buf))
                .map_err(|e| Error::io(path, e))?;
            let mut pos = 0;
            while pos + 4 <= buf.len() {
                let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
                let body = pos + 4;
                if body + len > buf.len() || len < 36 {
                    break;
                }
                let key: CacheKey = buf[body..body + 32].try_into().unwrap();
                let dim = u32::from_le_bytes(buf[body + 32..body + 36].try_into().unwrap()) as usize;
                if len != 36 + 8 * dim {
                    return Err(Error::domain(format!("corrupt cache record at byte {pos} in {}", path.display())));
                }
                let values = buf[body + 36..body + len]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                entries.insert(key, EmbeddingVector::new(values)?);
                pos = body + len;
            }
            if pos < buf.len() {
                good_end = Some(pos as u64);
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if let Some(end) = good_end {
            log::warn!("dropping truncated record at byte {end} of {}", path.display());
            writer.set_len(end).map_err(|e| Error::io(path, e))?;
        }
        Ok(EmbeddingCache {
            path: path.to_path_buf(),
            entries: RwLock::new(entries),
            writer: Mutex::new(writer),
        })
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        self.entries.read().unwrap().get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, vector: EmbeddingVector) -> Result<()> {
        let mut record = Vec::with_capacity(40 + 8 * vector.dim());
        record.extend_from_slice(&((36 + 8 * vector.dim()) as u32).to_le_bytes());
        record.extend_from_slice(&key);
        record.extend_from_slice(&(vector.dim() as u32).to_le_bytes());
        for v in vector.as_slice() {
            record.extend_from_slice(&v.to_le_bytes());
        }
        {
            let mut w = self.writer.lock().unwrap();
            w.write_all(&record).map_err(|e| Error::io(&self.path, e))?;
        }
        self.entries.write().unwrap().insert(key, vector);
        Ok(())
    }
}

/// Serves cached vectors and forwards only misses to the inner provider.
pub struct CachedProvider<P> {
    inner: P,
    cache: EmbeddingCache,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P, cache: EmbeddingCache) -> Self {
        CachedProvider { inner, cache }
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn spec(&self) -> &ProviderSpec {
        self.inner.spec()
    }

    fn embed_chunk(&self, texts: &[String], chunk_index: usize) -> Result<Vec<EmbeddingVector>> {
        let spec = self.inner.spec();
        let keys: Vec<CacheKey> = texts.iter().map(|t| cache_key(spec, t)).collect();
        let mut out: Vec<Option<EmbeddingVector>> = keys.iter().map(|k| self.cache.get(k)).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let miss_texts: Vec<String> = missing.iter().map(|&i| texts[i].clone()).collect();
            let fresh = self.inner.embed_chunk(&miss_texts, chunk_index)?;
            if fresh.len() != missing.len() {
                return Err(Error::Protocol(format!(
                    "expected {} vectors, got {}",
                    missing.len(),
                    fresh.len()
                )));
            }
            for (&i, v) in missing.iter().zip(fresh) {
                self.cache.insert(keys[i], v.clone())?;
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }
}
