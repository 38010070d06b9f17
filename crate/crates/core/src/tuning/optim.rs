//! AdamW: adaptive moments with decoupled weight decay.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tuning::config::TrainConfig;

/// Optimizer state: first/second moment buffers per parameter slot plus the
/// shared step counter for bias correction.
pub struct AdamW<E> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step_count: usize,
    m: Vec<Vec<E>>,
    v: Vec<Vec<E>>,
}

impl<E: Scalar> AdamW<E> {
    pub fn new(cfg: &TrainConfig) -> Self {
        AdamW {
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Advance the shared step counter; call once before the per-slot
    /// updates of an optimization step.
    pub fn begin_step(&mut self) {
        self.step_count += 1;
    }

    fn ensure_slot(&mut self, slot: usize, len: usize) {
        while self.m.len() <= slot {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[slot].is_empty() {
            self.m[slot] = vec![E::ZERO; len];
            self.v[slot] = vec![E::ZERO; len];
        }
    }

    /// One decoupled-weight-decay adaptive-moment update of a single
    /// parameter slot.
    pub fn update(&mut self, slot: usize, param: &mut [E], grad: &[E]) -> Result<()> {
        if param.len() != grad.len() {
            return Err(Error::Dimension {
                op: "adamw update",
                lhs: vec![param.len()],
                rhs: vec![grad.len()],
            });
        }
        self.ensure_slot(slot, param.len());
        let t = self.step_count as i32;
        let b1 = E::from_f64(self.beta1);
        let b2 = E::from_f64(self.beta2);
        let one = E::ONE;
        let bias1 = E::from_f64(1.0 - self.beta1.powi(t));
        let bias2 = E::from_f64(1.0 - self.beta2.powi(t));
        let lr = E::from_f64(self.lr);
        let eps = E::from_f64(self.eps);
        let wd = E::from_f64(self.weight_decay);

        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for i in 0..param.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            param[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + wd * param[i]);
        }
        Ok(())
    }

    /// Moment buffers for checkpointing (aligned with slot order).
    pub fn moments(&self) -> (&[Vec<E>], &[Vec<E>]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, step_count: usize, m: Vec<Vec<E>>, v: Vec<Vec<E>>) {
        self.step_count = step_count;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // minimize (p - 3)^2 by gradient 2(p - 3)
        let cfg = TrainConfig { lr: 0.1, weight_decay: 0.0, ..Default::default() };
        let mut opt = AdamW::<f64>::new(&cfg);
        let mut p = [0.0f64];
        for _ in 0..500 {
            let g = [2.0 * (p[0] - 3.0)];
            opt.begin_step();
            opt.update(0, &mut p, &g).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-2, "p = {}", p[0]);
    }

    #[test]
    fn weight_decay_shrinks_parameters_without_gradient() {
        let cfg = TrainConfig { lr: 0.01, weight_decay: 0.5, ..Default::default() };
        let mut opt = AdamW::<f64>::new(&cfg);
        let mut p = [10.0f64];
        for _ in 0..100 {
            opt.begin_step();
            opt.update(0, &mut p, &[0.0]).unwrap();
        }
        assert!(p[0] < 10.0);
    }

    #[test]
    fn deterministic_updates() {
        let cfg = TrainConfig::default();
        let run = || {
            let mut opt = AdamW::<f32>::new(&cfg);
            let mut p = [1.0f32, -2.0, 0.5];
            for step in 0..50 {
                let g = [0.3 * (step as f32 + 1.0).sin(), -0.1, 0.05 * step as f32];
                opt.begin_step();
                opt.update(0, &mut p, &g).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
