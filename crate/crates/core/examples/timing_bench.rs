//! Per-category embedding latency with mean, std and 95% CI.

use credscan::bench::{time_op, CategoryTiming, MonotonicClock};
use credscan::embedder::{embed_batch, FallbackProvider};
use credscan::synth::synthetic_dataset;
use credscan::taxonomy::CredentialCategory;

fn main() -> credscan::Result<()> {
    let data = synthetic_dataset(100, 1);
    let provider = FallbackProvider::default();
    let mut clock = MonotonicClock::default();
    for category in CredentialCategory::ALL {
        let texts: Vec<String> =
            data.records.iter().filter(|r| r.category == category).map(|r| r.text.clone()).collect();
        let stats = time_op(|_| embed_batch(&texts, &provider).map(drop), 10, 1, &mut clock)?;
        let t = CategoryTiming::new(category.name(), texts.len(), stats);
        println!(
            "{:<20} {:>4} items  {:.6}s ± {:.6}s  ({:.2e}s/item)",
            t.category, t.items, t.batch.mean_seconds, t.batch.ci95_seconds, t.per_item_mean_seconds
        );
    }
    Ok(())
}
