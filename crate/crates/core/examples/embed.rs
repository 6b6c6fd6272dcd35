//! Embed a few lines with the offline provider and compare cosine similarity.
//! Set CREDSCAN_ENDPOINT to use a running sidecar instead.

use credscan::embedder::{embed_batch, ProviderSpec};

fn main() -> credscan::Result<()> {
    let spec = match std::env::var("CREDSCAN_ENDPOINT") {
        Ok(url) => ProviderSpec::remote("gpt2", &url),
        Err(_) => ProviderSpec::fallback(),
    };
    let provider = spec.build()?;
    let texts: Vec<String> = ["password = hunter2", "db_password = letmein", "salt = 9f8e7d6c", "import os"]
        .map(String::from)
        .to_vec();
    let vectors = embed_batch(&texts, provider.as_ref())?;

    println!("{} vectors of dimension {}", vectors.len(), provider.dimension());
    for (i, a) in texts.iter().enumerate() {
        for (j, b) in texts.iter().enumerate().skip(i + 1) {
            println!("{:.3}  {a:?} ~ {b:?}", vectors[i].cosine(&vectors[j]));
        }
    }
    Ok(())
}
