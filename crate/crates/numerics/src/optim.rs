use serde::{Deserialize, Serialize};

use crate::error::{NumericsError, Result};
use crate::float::Float;
use crate::params::Parameters;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: OptimizerKind,
    pub lr: f64,
    /// Decoupled: each step first shrinks parameters by `lr * weight_decay`.
    pub weight_decay: f64,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { method: OptimizerKind::adam(), lr, weight_decay: 0.0 }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self { method: OptimizerKind::SgdMomentum { momentum }, lr, weight_decay: 0.0 }
    }

    pub fn with_weight_decay(self, weight_decay: f64) -> Self {
        Self { weight_decay, ..self }
    }
}

/// Moment buffers and step counter for one [`Parameters`] set.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Float> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, params: &Parameters<T>) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor::zeros(p.value.shape().to_vec())).collect();
        let second = match config.method {
            OptimizerKind::Adam { .. } => zeros(),
            OptimizerKind::SgdMomentum { .. } => Vec::new(),
        };
        Self { config, step: 0, first: zeros(), second }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn lr(&self) -> f64 {
        self.config.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    /// Applies one update from the accumulated gradients. Gradients are left
    /// in place; clear them with [`Parameters::zero_grad`].
    pub fn step(&mut self, params: &mut Parameters<T>) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(NumericsError::Checkpoint(format!(
                "optimizer tracks {} tensors, got {}",
                self.first.len(),
                params.len()
            )));
        }
        for (name, p) in params.iter() {
            if p.grad.is_none() {
                return Err(NumericsError::MissingGrad(name.to_string()));
            }
        }
        self.step += 1;
        let lr = self.config.lr;
        let decay = T::from_f64_lossy(1.0 - lr * self.config.weight_decay);
        for (i, (_, p)) in params.iter_mut().enumerate() {
            let grad = p.grad.as_ref().expect("checked above");
            if self.config.weight_decay != 0.0 {
                for v in p.value.data_mut() {
                    *v *= decay;
                }
            }
            match self.config.method {
                OptimizerKind::SgdMomentum { momentum } => {
                    let mu = T::from_f64_lossy(momentum);
                    let lr = T::from_f64_lossy(lr);
                    let buf = self.first[i].data_mut();
                    for ((v, b), &g) in p.value.data_mut().iter_mut().zip(buf).zip(grad.data()) {
                        *b = mu * *b + g;
                        *v -= lr * *b;
                    }
                }
                OptimizerKind::Adam { beta1, beta2, epsilon } => {
                    let t = self.step as i32;
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    let (b1, b2) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2));
                    let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - beta1), T::from_f64_lossy(1.0 - beta2));
                    let step = T::from_f64_lossy(lr / c1);
                    let inv_c2 = T::from_f64_lossy(1.0 / c2);
                    let eps = T::from_f64_lossy(epsilon);
                    let m = self.first[i].data_mut();
                    let s = self.second[i].data_mut();
                    for (((v, m), s), &g) in p.value.data_mut().iter_mut().zip(m).zip(s).zip(grad.data()) {
                        *m = b1 * *m + one_b1 * g;
                        *s = b2 * *s + one_b2 * g * g;
                        *v -= step * *m / ((*s * inv_c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Step-decay schedule: the base rate is multiplied by `gamma` at each
/// milestone epoch (0-based epoch index at which the new rate takes effect).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub base_lr: f64,
    pub milestones: Vec<usize>,
    pub gamma: f64,
}

impl StepSchedule {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base_lr * self.gamma.powi(passed as i32)
    }
}
