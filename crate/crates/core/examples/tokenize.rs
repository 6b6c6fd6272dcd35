//! Byte-level BPE and WordPiece tokenization of credential-like lines.

use credscan::tokenizers::{byte_bpe_tokenize, wordpiece_tokenize, BpeModel, WordPieceVocab};

fn main() -> credscan::Result<()> {
    let corpus = [
        "password = hunter2",
        "db_password: s3cr3t",
        "api_token = abcdef",
        "private_key_id: 1234",
    ];
    let bpe = BpeModel::learn(&corpus, 40, 2);
    let vocab = WordPieceVocab::from_tokens(["password", "pass", "##word", "=", "hunter", "##2", "api", "_", "token"])?;

    for line in ["password = hunter2", "api_token = Qz8!vB2"] {
        let pieces = byte_bpe_tokenize(line, &bpe);
        println!("{line}");
        println!("  bpe       ({:>2}) {:?}", pieces.len(), pieces);
        println!("  roundtrip {:?}", bpe.detokenize(&pieces)?);
        println!("  wordpiece      {:?}", wordpiece_tokenize(line, &vocab));
    }
    println!("learned {} merges, vocab size {}", bpe.merges().len(), bpe.vocab_size());
    Ok(())
}
