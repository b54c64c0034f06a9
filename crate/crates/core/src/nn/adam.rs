use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay, applied as `lr * weight_decay * value`.
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// First/second moment estimates for every tensor of one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients currently stored in `store`, then
    /// zeroes them. A non-finite gradient aborts before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(Error::shape(
                "adam_step",
                format!("state tracks {} tensors, store has {}", self.first.len(), store.len()),
            ));
        }
        for (name, t) in store.iter() {
            if t.grad.len() != t.values.len() {
                return Err(Error::shape("adam_step", format!("{name}: gradient not populated")));
            }
            if let Some(g) = t.grad.iter().find(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient {g} in {name}")));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for ((t, m), v) in store
            .tensors_mut()
            .iter_mut()
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            for i in 0..t.values.len() {
                let g = t.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                let mut update = m_hat / (v_hat.sqrt() + epsilon);
                if weight_decay != 0.0 {
                    update += weight_decay * t.values[i];
                }
                t.values[i] -= learning_rate * update;
            }
            t.zero_grad();
        }
        Ok(())
    }
}
