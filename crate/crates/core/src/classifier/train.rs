use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adamw_step, AdamState, TrainConfig};
use super::{argmax, cross_entropy, softmax, Mlp, MlpArchitecture};
use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};

/// Hyperparameter bundles for the two embedding backbones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Preset {
    #[serde(rename = "bert-mlp")]
    #[value(name = "bert-mlp")]
    BertMlp,
    #[serde(rename = "gpt2-mlp")]
    #[value(name = "gpt2-mlp")]
    Gpt2Mlp,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::BertMlp => "bert-mlp",
            Preset::Gpt2Mlp => "gpt2-mlp",
        }
    }

    /// Embedding model the preset is meant to sit on.
    pub fn backbone(self) -> &'static str {
        match self {
            Preset::BertMlp => "bert-base",
            Preset::Gpt2Mlp => "gpt2",
        }
    }

    pub fn config(self, seed: u64) -> TrainConfig {
        let (learning_rate, epochs) = match self {
            Preset::BertMlp => (1e-3, 10),
            Preset::Gpt2Mlp => (1e-4, 4),
        };
        TrainConfig {
            learning_rate,
            epochs,
            seed,
            ..TrainConfig::default()
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bert-mlp" => Ok(Preset::BertMlp),
            "gpt2-mlp" => Ok(Preset::Gpt2Mlp),
            other => Err(Error::domain(format!("unknown preset {other:?} (expected bert-mlp or gpt2-mlp)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean train-mode loss over the epoch's mini-batches.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub valid_loss: Option<f64>,
    pub valid_accuracy: Option<f64>,
}

/// Mean loss and accuracy in inference mode.
pub fn evaluate(model: &Mlp, data: &[(EmbeddingVector, usize)]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::domain("cannot evaluate on an empty set"));
    }
    let mut loss = 0.0;
    let mut correct = 0;
    for (x, y) in data {
        let probs = softmax(&model.logits(x.as_slice())?);
        loss += cross_entropy(&probs, *y)?;
        if argmax(&probs) == *y {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch AdamW training. A single ChaCha8 stream seeded from
/// `config.seed` drives initialization, per-epoch shuffles and dropout, so
/// the result is a pure function of (data order, arch, config).
pub fn train(
    train_set: &[(EmbeddingVector, usize)],
    valid_set: &[(EmbeddingVector, usize)],
    arch: MlpArchitecture,
    config: &TrainConfig,
) -> Result<(Mlp, Vec<EpochStats>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    for (x, y) in train_set.iter().chain(valid_set) {
        if x.dim() != arch.input_dim {
            return Err(Error::domain(format!(
                "embedding dimension {} does not match input_dim {}",
                x.dim(),
                arch.input_dim
            )));
        }
        if *y >= arch.num_classes {
            return Err(Error::domain(format!("label {y} out of range 0..{}", arch.num_classes)));
        }
    }
    let mut rng = crate::seeded_rng(config.seed);
    let mut model = Mlp::init(arch, &mut rng)?;
    let mut state = AdamState::new(&arch);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        let mut correct = 0;
        for batch in order.chunks(config.batch_size) {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| train_set[i].0.as_slice()).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| train_set[i].1).collect();
            let (loss, grads, hits) = model.batch_gradients(&inputs, &labels, &mut rng)?;
            adamw_step(&mut model.params, &grads, &mut state, config);
            loss_sum += loss;
            batches += 1;
            correct += hits;
        }
        if !model.params.is_finite() {
            return Err(Error::domain(format!("parameters diverged in epoch {}", epoch + 1)));
        }
        let (valid_loss, valid_accuracy) = if valid_set.is_empty() {
            (None, None)
        } else {
            let (l, a) = evaluate(&model, valid_set)?;
            (Some(l), Some(a))
        };
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss: loss_sum / batches as f64,
            train_accuracy: correct as f64 / train_set.len() as f64,
            valid_loss,
            valid_accuracy,
        };
        log::info!(
            "epoch {}: train loss {:.4} acc {:.4}",
            stats.epoch,
            stats.train_loss,
            stats.train_accuracy
        );
        history.push(stats);
    }
    Ok((model, history))
}
