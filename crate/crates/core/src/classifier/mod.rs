//! Three-layer perceptron over embedding vectors.
//!
//! `logits = W3·drop(relu(W2·drop(relu(W1·x + b1)) + b2)) + b3`
//!
//! Dropout is inverted (kept units are scaled by `1/(1-p)` during training),
//! so inference is a plain deterministic pass. All arithmetic is `f64`.

pub mod adam;
pub mod checkpoint;
pub mod train;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::taxonomy::{CredentialCategory, NUM_CATEGORIES};

pub use adam::{adamw_step, AdamState, TrainConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use train::{evaluate, train, EpochStats, Preset};

/// Floor added inside the log of the cross-entropy.
pub const LOG_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
}

impl Default for MlpArchitecture {
    fn default() -> Self {
        MlpArchitecture {
            input_dim: 768,
            hidden1: 256,
            hidden2: 64,
            num_classes: NUM_CATEGORIES,
            dropout_rate: 0.2,
        }
    }
}

impl MlpArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden1 == 0 || self.hidden2 == 0 || self.num_classes == 0 {
            return Err(Error::domain("all layer widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::domain("dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }

    fn shapes(&self) -> [(usize, usize); 6] {
        [
            (self.hidden1, self.input_dim),
            (self.hidden1, 1),
            (self.hidden2, self.hidden1),
            (self.hidden2, 1),
            (self.num_classes, self.hidden2),
            (self.num_classes, 1),
        ]
    }
}

/// Weights are row-major `out × in`. The same type holds gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Indices into [`MlpParams::tensors`] that are weight matrices (decayed by
/// AdamW); the others are biases.
pub const WEIGHT_TENSORS: [usize; 3] = [0, 2, 4];

impl MlpParams {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let [s1, s2, s3, s4, s5, s6] = arch.shapes();
        let z = |(r, c): (usize, usize)| vec![0.0; r * c];
        MlpParams {
            w1: z(s1),
            b1: z(s2),
            w2: z(s3),
            b2: z(s4),
            w3: z(s5),
            b3: z(s6),
        }
    }

    /// He-uniform weights (bound `sqrt(6 / fan_in)`), zero biases.
    pub fn he_uniform<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for (w, fan_in) in [
            (&mut p.w1, arch.input_dim),
            (&mut p.w2, arch.hidden1),
            (&mut p.w3, arch.hidden2),
        ] {
            let bound = (6.0 / fan_in as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        p
    }

    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn check_shapes(&self, arch: &MlpArchitecture) -> Result<()> {
        for (t, (r, c)) in self.tensors().iter().zip(arch.shapes()) {
            if t.len() != r * c {
                return Err(Error::domain(format!("tensor has {} entries, expected {r}×{c}", t.len())));
            }
        }
        Ok(())
    }

    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += scale * y);
        }
    }
}

pub enum Mode<'r> {
    Infer,
    Train(&'r mut dyn rand::RngCore),
}

/// Intermediate activations kept for backpropagation. Masks hold the
/// per-unit dropout multiplier (0 or `1/(1-p)`).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Vec<f64>,
    z1: Vec<f64>,
    mask1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    mask2: Vec<f64>,
    a2: Vec<f64>,
    pub logits: Vec<f64>,
}

impl ForwardCache {
    /// Hidden-layer pre-activations (before ReLU) for both hidden layers.
    pub fn pre_activations(&self) -> [&[f64]; 2] {
        [&self.z1, &self.z2]
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(r, bias)| {
            let row = &w[r * cols..(r + 1) * cols];
            bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

fn dropout_mask(n: usize, rate: f64, mode: &mut Mode<'_>) -> Vec<f64> {
    match mode {
        Mode::Train(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            (0..n)
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect()
        }
        _ => vec![1.0; n],
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn cross_entropy(probabilities: &[f64], label: usize) -> Result<f64> {
    let p = probabilities
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} out of range 0..{}", probabilities.len())))?;
    Ok(-(p + LOG_EPSILON).ln())
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub arch: MlpArchitecture,
    pub params: MlpParams,
}

impl Mlp {
    pub fn new(arch: MlpArchitecture, params: MlpParams) -> Result<Self> {
        arch.validate()?;
        params.check_shapes(&arch)?;
        Ok(Mlp { arch, params })
    }

    pub fn zeros(arch: MlpArchitecture) -> Result<Self> {
        arch.validate()?;
        Ok(Mlp {
            params: MlpParams::zeros(&arch),
            arch,
        })
    }

    pub fn init<R: Rng + ?Sized>(arch: MlpArchitecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        Ok(Mlp {
            params: MlpParams::he_uniform(&arch, rng),
            arch,
        })
    }

    pub fn forward(&self, x: &[f64], mut mode: Mode<'_>) -> Result<ForwardCache> {
        if x.len() != self.arch.input_dim {
            return Err(Error::domain(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.arch.input_dim
            )));
        }
        let p = &self.params;
        let rate = self.arch.dropout_rate;
        let z1 = affine(&p.w1, &p.b1, x);
        let mask1 = dropout_mask(z1.len(), rate, &mut mode);
        let a1: Vec<f64> = z1.iter().zip(&mask1).map(|(z, m)| z.max(0.0) * m).collect();
        let z2 = affine(&p.w2, &p.b2, &a1);
        let mask2 = dropout_mask(z2.len(), rate, &mut mode);
        let a2: Vec<f64> = z2.iter().zip(&mask2).map(|(z, m)| z.max(0.0) * m).collect();
        let logits = affine(&p.w3, &p.b3, &a2);
        Ok(ForwardCache {
            x: x.to_vec(),
            z1,
            mask1,
            a1,
            z2,
            mask2,
            a2,
            logits,
        })
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, Mode::Infer)?.logits)
    }

    /// Gradients of the cross-entropy for one sample, w.r.t. every parameter.
    pub fn backward(&self, cache: &ForwardCache, label: usize) -> Result<MlpParams> {
        let mut grads = MlpParams::zeros(&self.arch);
        self.accumulate_gradients(cache, label, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale ×` the per-sample gradient into `grads`.
    pub fn accumulate_gradients(
        &self,
        cache: &ForwardCache,
        label: usize,
        scale: f64,
        grads: &mut MlpParams,
    ) -> Result<()> {
        let arch = &self.arch;
        if label >= arch.num_classes {
            return Err(Error::domain(format!("label {label} out of range 0..{}", arch.num_classes)));
        }
        let p = &self.params;
        let mut d3 = softmax(&cache.logits);
        d3[label] -= 1.0;
        d3.iter_mut().for_each(|d| *d *= scale);

        outer_add(&mut grads.w3, &d3, &cache.a2);
        add(&mut grads.b3, &d3);
        let d2: Vec<f64> = back_through(&p.w3, &d3, arch.hidden2)
            .into_iter()
            .enumerate()
            .map(|(j, g)| if cache.z2[j] > 0.0 { g * cache.mask2[j] } else { 0.0 })
            .collect();

        outer_add(&mut grads.w2, &d2, &cache.a1);
        add(&mut grads.b2, &d2);
        let d1: Vec<f64> = back_through(&p.w2, &d2, arch.hidden1)
            .into_iter()
            .enumerate()
            .map(|(j, g)| if cache.z1[j] > 0.0 { g * cache.mask1[j] } else { 0.0 })
            .collect();

        outer_add(&mut grads.w1, &d1, &cache.x);
        add(&mut grads.b1, &d1);
        Ok(())
    }

    /// Mean cross-entropy and gradients over a batch, in train mode.
    pub fn batch_gradients(
        &self,
        inputs: &[&[f64]],
        labels: &[usize],
        rng: &mut dyn rand::RngCore,
    ) -> Result<(f64, MlpParams, usize)> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::domain("batch must be non-empty with one label per input"));
        }
        let scale = 1.0 / inputs.len() as f64;
        let mut grads = MlpParams::zeros(&self.arch);
        let mut loss = 0.0;
        let mut correct = 0;
        for (x, &y) in inputs.iter().zip(labels) {
            let cache = self.forward(x, Mode::Train(&mut *rng))?;
            let probs = softmax(&cache.logits);
            loss += cross_entropy(&probs, y)?;
            if argmax(&probs) == y {
                correct += 1;
            }
            self.accumulate_gradients(&cache, y, scale, &mut grads)?;
        }
        Ok((loss * scale, grads, correct))
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<(usize, Vec<f64>)> {
        let probs = softmax(&self.logits(x)?);
        Ok((argmax(&probs), probs))
    }

    /// Most probable category and the full probability vector.
    pub fn predict(&self, x: &EmbeddingVector) -> Result<(CredentialCategory, Vec<f64>)> {
        let (class, probs) = self.predict_class(x.as_slice())?;
        Ok((CredentialCategory::from_id(class)?, probs))
    }
}

fn outer_add(w: &mut [f64], delta: &[f64], input: &[f64]) {
    let cols = input.len();
    for (r, d) in delta.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        let row = &mut w[r * cols..(r + 1) * cols];
        row.iter_mut().zip(input).for_each(|(g, x)| *g += d * x);
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

/// `Wᵀ·delta` for a row-major `delta.len() × cols` matrix.
fn back_through(w: &[f64], delta: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for (r, d) in delta.iter().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        out.iter_mut().zip(row).for_each(|(o, x)| *o += d * x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    fn tiny() -> MlpArchitecture {
        MlpArchitecture {
            input_dim: 4,
            hidden1: 5,
            hidden2: 3,
            num_classes: 3,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let m = Mlp::zeros(MlpArchitecture::default()).unwrap();
        let x = vec![0.3; 768];
        assert_eq!(m.logits(&x).unwrap(), vec![0.0; 8]);
        let (cat, probs) = m.predict(&EmbeddingVector::new(x).unwrap()).unwrap();
        assert_eq!(cat, CredentialCategory::Passwords);
        assert!((probs[0] - 0.125).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = Mlp::zeros(tiny()).unwrap();
        assert!(m.logits(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn softmax_edge_cases() {
        assert!(softmax(&[0.0; 8]).iter().all(|p| (p - 0.125).abs() < 1e-15));
        let p = softmax(&[1000.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] >= 0.0 && p[1] < 1e-300);
        let a = softmax(&[0.1, -2.0, 3.0]);
        let b = softmax(&[5.1, 3.0, 8.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = vec![0.125; 8];
        assert!((cross_entropy(&uniform, 3).unwrap() - 8f64.ln()).abs() < 1e-9);
        assert!(cross_entropy(&[0.0, 1.0], 1).unwrap() < 1e-11);
        assert!(cross_entropy(&uniform, 8).is_err());
    }

    #[test]
    fn dropout_zero_train_equals_infer() {
        let mut rng = seeded_rng(3);
        let m = Mlp::init(tiny(), &mut rng).unwrap();
        let x = [0.5, -1.0, 2.0, 0.25];
        let infer = m.logits(&x).unwrap();
        let train = m.forward(&x, Mode::Train(&mut rng)).unwrap().logits;
        assert_eq!(infer, train);
        assert_eq!(infer, m.logits(&x).unwrap());
    }

    #[test]
    fn output_bias_gradient_is_p_minus_onehot() {
        let mut rng = seeded_rng(5);
        let m = Mlp::init(tiny(), &mut rng).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4];
        let cache = m.forward(&x, Mode::Infer).unwrap();
        let probs = softmax(&cache.logits);
        let g = m.backward(&cache, 2).unwrap();
        for (k, (p, b)) in probs.iter().zip(&g.b3).enumerate() {
            let expected = p - if k == 2 { 1.0 } else { 0.0 };
            assert!((b - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn confident_correct_prediction_has_tiny_gradients() {
        let arch = tiny();
        let mut m = Mlp::zeros(arch).unwrap();
        m.params.b3 = vec![0.0, 60.0, 0.0];
        let cache = m.forward(&[1.0, 1.0, 1.0, 1.0], Mode::Infer).unwrap();
        let g = m.backward(&cache, 1).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|v| v.abs() < 1e-20)));
    }

    #[test]
    fn dropout_masks_are_inverted() {
        let arch = MlpArchitecture {
            dropout_rate: 0.5,
            ..tiny()
        };
        let mut rng = seeded_rng(9);
        let m = Mlp::init(arch, &mut rng).unwrap();
        let cache = m.forward(&[1.0, 2.0, 3.0, 4.0], Mode::Train(&mut rng)).unwrap();
        assert!(cache.mask1.iter().chain(&cache.mask2).all(|&v| v == 0.0 || v == 2.0));
    }
}
