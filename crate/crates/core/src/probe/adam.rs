//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamParams {
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

pub struct AdamW<T> {
    lr: T,
    weight_decay: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    m: Vec<T>,
    v: Vec<T>,
    decay_mask: Vec<bool>,
    step: i32,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n_params: usize, lr: f64, weight_decay: f64, params: AdamParams, decay_mask: Vec<bool>) -> Self {
        assert_eq!(decay_mask.len(), n_params);
        Self {
            lr: T::of(lr),
            weight_decay: T::of(weight_decay),
            beta1: T::of(params.beta1),
            beta2: T::of(params.beta2),
            epsilon: T::of(params.epsilon),
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            decay_mask,
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [T], grads: &[T]) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            if self.decay_mask[i] {
                params[i] = params[i] - self.lr * self.weight_decay * params[i];
            }
            self.m[i] = self.beta1 * self.m[i] + (one - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (one - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] = params[i] - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
