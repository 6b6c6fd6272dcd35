//! Credential detection toolkit: a rule-based scanner with entropy
//! screening, tokenizers, text embeddings, an MLP classifier over
//! embeddings, evaluation metrics, embedding-space analysis and timing.

pub mod analysis;
pub mod bench;
pub mod classifier;
pub mod cli;
pub mod embedder;
pub mod error;
pub mod ingest;
pub mod metrics;
pub mod scanner;
pub mod synth;
pub mod taxonomy;
pub mod tokenizers;

pub use error::{Error, Result};

/// The crate-wide deterministic generator.
pub fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
