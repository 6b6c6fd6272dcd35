//! Train the category classifier on generated data, save a checkpoint and
//! reload it for a prediction.

use credscan::classifier::{load_checkpoint, save_checkpoint, train, Checkpoint, MlpArchitecture, Preset};
use credscan::embedder::{embed_batch, EmbeddingVector, FallbackProvider};
use credscan::ingest::{split_dataset, LabeledDataset, SplitSpec};
use credscan::metrics::MetricReport;
use credscan::synth::synthetic_dataset;

fn embed(data: &LabeledDataset, provider: &FallbackProvider) -> credscan::Result<Vec<(EmbeddingVector, usize)>> {
    let texts: Vec<String> = data.records.iter().map(|r| r.text.clone()).collect();
    let vectors = embed_batch(&texts, provider)?;
    Ok(vectors.into_iter().zip(data.records.iter().map(|r| r.category.id())).collect())
}

fn main() -> credscan::Result<()> {
    let seed = 42;
    let split = split_dataset(&synthetic_dataset(200, seed), &SplitSpec::with_seed(seed))?;
    let provider = FallbackProvider::default();
    let (train_set, valid_set, test_set) =
        (embed(&split.train, &provider)?, embed(&split.valid, &provider)?, embed(&split.test, &provider)?);

    let preset = Preset::Gpt2Mlp;
    let (model, history) = train(&train_set, &valid_set, MlpArchitecture::default(), &preset.config(seed))?;
    for e in &history {
        println!("epoch {} train_loss {:.4} valid_acc {:?}", e.epoch, e.train_loss, e.valid_accuracy);
    }

    let labels: Vec<usize> = test_set.iter().map(|(_, y)| *y).collect();
    let preds: Vec<usize> = test_set.iter().map(|(x, _)| model.predict_class(x.as_slice()).map(|p| p.0)).collect::<Result<_, _>>()?;
    print!("{}", MetricReport::from_predictions(&labels, &preds, 8)?.to_text());

    let path = std::env::temp_dir().join("credscan-example.ckpt");
    save_checkpoint(&path, &Checkpoint { model, seed, preset: preset.name().into() })?;
    let restored = load_checkpoint(&path)?;
    let (category, probs) = restored.model.predict(&credscan::embedder::fallback_embed("password = hunter2", 768)?)?;
    println!("reloaded checkpoint says {category} ({:.2})", probs[category.id()]);
    std::fs::remove_file(path).ok();
    Ok(())
}
