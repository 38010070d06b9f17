//! Finetuning hyperparameters.

use crate::error::{Error, Result};

/// Hyperparameters of the disentangled finetuning loop.
///
/// Defaults: both auxiliary weights at their standard working values
/// (`lambda2 = 0.01`, `lambda3 = 0.001`), AdamW at lr 1e-4 with decoupled
/// weight decay 0.01, batch size 1, rank-4 low-rank factors, 3000
/// iterations for full runs.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Weight of the weak denoising term; must stay below 1.
    pub lambda2: f64,
    /// Weight of the contrastive embedding term.
    pub lambda3: f64,
    pub lr: f64,
    pub iterations: usize,
    pub batch: usize,
    pub seed: u64,
    pub lora_rank: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Intermediate checkpoints are written every this many iterations.
    pub save_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda2: 0.01,
            lambda3: 0.001,
            lr: 1e-4,
            iterations: 3000,
            batch: 1,
            seed: 42,
            lora_rank: 4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            save_interval: 500,
        }
    }
}

impl TrainConfig {
    /// Short run used by CI and determinism checks.
    pub fn smoke() -> Self {
        TrainConfig { iterations: 500, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda2) {
            return Err(Error::Config(format!(
                "lambda2 must satisfy 0 <= lambda2 < 1, got {}",
                self.lambda2
            )));
        }
        if self.lambda3 < 0.0 {
            return Err(Error::Config(format!("lambda3 must be >= 0, got {}", self.lambda3)));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if self.batch != 1 {
            return Err(Error::Config(format!("batch size must be 1, got {}", self.batch)));
        }
        if self.lora_rank == 0 {
            return Err(Error::Config("lora_rank must be >= 1".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        if self.adam_eps <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::Config("bad optimizer epsilon/weight decay".into()));
        }
        if self.save_interval == 0 {
            return Err(Error::Config("save_interval must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::smoke().validate().unwrap();
    }

    #[test]
    fn lambda2_must_stay_below_one() {
        let cfg = TrainConfig { lambda2: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig { lambda2: 0.99, ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn only_unit_batches_supported() {
        let cfg = TrainConfig { batch: 2, ..Default::default() };
        assert!(cfg.validate().is_err());
    }
}
