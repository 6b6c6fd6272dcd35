//! Subword tokenizers: greedy WordPiece and byte-level BPE.

pub mod bpe;
pub mod wordpiece;

pub use bpe::{byte_bpe_tokenize, byte_symbols, BpeModel};
pub use wordpiece::{wordpiece_tokenize, WordPieceVocab};

use crate::error::Result;

/// Which tokenizer produced a token sequence.
#[derive(Debug, Clone, Copy)]
pub enum Scheme<'a> {
    WordPiece(&'a WordPieceVocab),
    ByteBpe(&'a BpeModel),
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S], scheme: Scheme<'_>) -> Result<String> {
    match scheme {
        Scheme::WordPiece(v) => v.detokenize(tokens),
        Scheme::ByteBpe(m) => m.detokenize(tokens),
    }
}
