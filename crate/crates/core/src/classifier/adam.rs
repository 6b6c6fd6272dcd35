use serde::{Deserialize, Serialize};

use super::{MlpArchitecture, MlpParams, WEIGHT_TENSORS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.01,
            epochs: 10,
            batch_size: 32,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.weight_decay >= 0.0
            && self.batch_size > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid training config {self:?}")))
        }
    }
}

/// First and second moment accumulators shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(arch: &MlpArchitecture) -> Self {
        AdamState {
            m: MlpParams::zeros(arch),
            v: MlpParams::zeros(arch),
            t: 0,
        }
    }
}

/// One AdamW update. Weight decay is decoupled and applied to the weight
/// matrices only, using the pre-update parameter value.
pub fn adamw_step(params: &mut MlpParams, grads: &MlpParams, state: &mut AdamState, config: &TrainConfig) {
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let params_t = params.tensors_mut();
    let m_t = state.m.tensors_mut();
    let v_t = state.v.tensors_mut();
    let g_t = grads.tensors();
    for (i, (((theta, m), v), g)) in params_t.into_iter().zip(m_t).zip(v_t).zip(g_t).enumerate() {
        let decay = if WEIGHT_TENSORS.contains(&i) {
            config.weight_decay
        } else {
            0.0
        };
        for j in 0..theta.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let old = theta[j];
            theta[j] = old - lr * m_hat / (v_hat.sqrt() + config.epsilon) - lr * decay * old;
        }
    }
}
