use crate::error::{Error, Result};
use crate::optim::AdamConfig;

/// Hyperparameters for code learning.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Number of codebooks.
    pub m: usize,
    /// Basis vectors per codebook.
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    /// Width of the hidden layer of the code-logit encoder.
    pub hidden_dim: usize,
    pub seed: u64,
    /// Independent training attempts; the one with the lowest final loss is kept.
    pub restarts: usize,
    pub adam: AdamConfig,
}

impl LearnerConfig {
    /// Defaults for everything except the code shape; `hidden_dim` is `M*K/2`.
    pub fn new(m: usize, k: usize) -> Self {
        Self {
            m,
            k,
            epochs: 500,
            batch_size: 64,
            learning_rate: 1e-4,
            temperature: 1.0,
            hidden_dim: default_hidden_dim(m, k),
            seed: 0,
            restarts: 1,
            adam: AdamConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("M", self.m),
            ("K", self.k),
            ("epochs", self.epochs),
            ("batch-size", self.batch_size),
            ("hidden-dim", self.hidden_dim),
            ("restarts", self.restarts),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.k > u32::MAX as usize {
            return Err(Error::config("K", "codes must fit in 32 bits"));
        }
        let positive_real = [
            ("learning-rate", self.learning_rate),
            ("temperature", self.temperature),
            ("adam-epsilon", self.adam.epsilon),
        ];
        for (field, v) in positive_real {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(field, format!("must be a positive real, got {v}")));
            }
        }
        for (field, v) in [("adam-beta1", self.adam.beta1), ("adam-beta2", self.adam.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(field, format!("must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Seed of the given attempt; attempt 0 uses the configured seed unchanged.
pub fn attempt_seed(seed: u64, attempt: usize) -> u64 {
    seed ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

pub fn default_hidden_dim(m: usize, k: usize) -> usize {
    (m * k / 2).max(1)
}
