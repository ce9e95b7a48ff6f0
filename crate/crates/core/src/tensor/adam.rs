use alloc::vec;
use alloc::vec::Vec;

use libm::{pow, sqrt};
use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are created on the first step,
/// one per parameter slot in the order parameters are passed.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step<'a, I>(&mut self, pairs: I)
    where
        I: IntoIterator<Item = (&'a mut Tensor, &'a [f64])>,
    {
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bias1 = 1.0 - pow(beta1, self.step as f64);
        let bias2 = 1.0 - pow(beta2, self.step as f64);
        for (slot, (param, grad)) in pairs.into_iter().enumerate() {
            assert_eq!(
                param.len(),
                grad.len(),
                "adam: parameter slot {slot} has {} values but gradient has {}",
                param.len(),
                grad.len()
            );
            if slot == self.first.len() {
                self.first.push(vec![0.0; param.len()]);
                self.second.push(vec![0.0; param.len()]);
            }
            let m = &mut self.first[slot];
            let v = &mut self.second[slot];
            for (((w, &g), m), v) in param.data_mut().iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *w -= lr * m_hat / (sqrt(v_hat) + eps);
            }
        }
    }
}
