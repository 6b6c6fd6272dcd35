//! Generate a labelled dataset and split it 80/10/10 by category.

use credscan::ingest::{distribution, split_dataset, SplitSpec};
use credscan::synth::synthetic_dataset;

fn main() -> credscan::Result<()> {
    let data = synthetic_dataset(50, 7);
    let split = split_dataset(&data, &SplitSpec::with_seed(7))?;
    println!("total {}", data.len());
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        println!("{name:<6}{:>5}  {:?}", part.len(), distribution(part));
    }
    Ok(())
}
