//! The identity-irrelevant mask adapter.
//!
//! Filters the pooled image feature through a learnable sigmoid gate and a
//! two-layer ReLU MLP with skip connection:
//! `f_i = M * f_p + MLP(M * f_p)` with `M = sigmoid(m_raw)` elementwise in
//! `(0, 1)` by construction.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, rng_from_seed, subseed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct MaskAdapter<E> {
    pub m_raw: Tensor<E>,
    pub w1: Tensor<E>,
    pub b1: Tensor<E>,
    pub w2: Tensor<E>,
    pub b2: Tensor<E>,
    dim: usize,
}

impl<E: Scalar> MaskAdapter<E> {
    /// `m_raw = 0` (gate starts at 0.5) and small Gaussian MLP weights, so
    /// the skip path dominates initially.
    pub fn init(dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(subseed(seed, "mask-adapter"));
        MaskAdapter {
            m_raw: Tensor::zeros(vec![dim]),
            w1: normal_tensor(&mut rng, vec![dim, dim], 0.02),
            b1: Tensor::zeros(vec![dim]),
            w2: normal_tensor(&mut rng, vec![dim, dim], 0.02),
            b2: Tensor::zeros(vec![dim]),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The gate `M = sigmoid(m_raw)`, inside `(0, 1)` for all magnitudes the
    /// optimizer can reach (f32 saturates to exactly 0/1 only past |x| ~ 17).
    pub fn mask(&self) -> Tensor<E> {
        self.m_raw.map(|v| E::ONE / (E::ONE + (-v).exp()))
    }

    pub fn param_count(&self) -> usize {
        self.m_raw.numel() + self.w1.numel() + self.b1.numel() + self.w2.numel() + self.b2.numel()
    }

    pub fn visit_params(&self, mut f: impl FnMut(&str, &Tensor<E>)) {
        f("adapter.m_raw", &self.m_raw);
        f("adapter.mlp.w1", &self.w1);
        f("adapter.mlp.b1", &self.b1);
        f("adapter.mlp.w2", &self.w2);
        f("adapter.mlp.b2", &self.b2);
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<E>)) {
        f("adapter.m_raw", &mut self.m_raw);
        f("adapter.mlp.w1", &mut self.w1);
        f("adapter.mlp.b1", &mut self.b1);
        f("adapter.mlp.w2", &mut self.w2);
        f("adapter.mlp.b2", &mut self.b2);
    }

    pub fn stage(&self, tape: &mut Tape<E>, trainable: bool) -> Result<StagedAdapter> {
        Ok(StagedAdapter {
            m_raw: tape.leaf(self.m_raw.clone(), trainable)?,
            w1: tape.leaf(self.w1.clone(), trainable)?,
            b1: tape.leaf(self.b1.clone(), trainable)?,
            w2: tape.leaf(self.w2.clone(), trainable)?,
            b2: tape.leaf(self.b2.clone(), trainable)?,
            dim: self.dim,
        })
    }

    pub fn cast<F: Scalar>(&self) -> MaskAdapter<F> {
        MaskAdapter {
            m_raw: self.m_raw.cast(),
            w1: self.w1.cast(),
            b1: self.b1.cast(),
            w2: self.w2.cast(),
            b2: self.b2.cast(),
            dim: self.dim,
        }
    }
}

/// Tape handles for a staged adapter.
pub struct StagedAdapter {
    pub m_raw: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    dim: usize,
}

impl StagedAdapter {
    /// Gradient handles in canonical order, aligned with `visit_params`.
    pub fn vars_in_order(&self) -> Vec<(String, Var)> {
        vec![
            ("adapter.m_raw".into(), self.m_raw),
            ("adapter.mlp.w1".into(), self.w1),
            ("adapter.mlp.b1".into(), self.b1),
            ("adapter.mlp.w2".into(), self.w2),
            ("adapter.mlp.b2".into(), self.b2),
        ]
    }
}

/// `f_i = M * f_p + MLP(M * f_p)` on the tape. `f_p` is consumed as a leaf;
/// gradients reach only the staged adapter parameters.
pub fn adapter_forward<E: Scalar>(
    tape: &mut Tape<E>,
    adapter: &StagedAdapter,
    f_p: Var,
) -> Result<Var> {
    let fps = tape.value(f_p).shape().to_vec();
    if fps != [adapter.dim] {
        return Err(Error::Dimension {
            op: "adapter_forward",
            lhs: fps,
            rhs: vec![adapter.dim],
        });
    }
    let mask = tape.sigmoid(adapter.m_raw)?;
    let gated = tape.hadamard(mask, f_p)?;
    let row = tape.reshape(gated, vec![1, adapter.dim])?;
    let h = tape.matmul_nt(row, adapter.w1)?;
    let h = tape.add_bias_row(h, adapter.b1)?;
    let h = tape.relu(h)?;
    let m = tape.matmul_nt(h, adapter.w2)?;
    let m = tape.add_bias_row(m, adapter.b2)?;
    let out = tape.add(row, m)?;
    tape.reshape(out, vec![adapter.dim])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn forward_with(
        adapter: &MaskAdapter<f64>,
        f_p: &[f64],
    ) -> Vec<f64> {
        let mut tape = Tape::<f64>::new();
        let staged = adapter.stage(&mut tape, false).unwrap();
        let fp = tape
            .constant(Tensor::new(vec![f_p.len()], f_p.to_vec()).unwrap())
            .unwrap();
        let out = adapter_forward(&mut tape, &staged, fp).unwrap();
        tape.value(out).data().to_vec()
    }

    #[test]
    fn zero_mlp_reduces_to_gated_skip() {
        // zero MLP weights, m_raw = 0 (M = 0.5), f_p = [2, -4] -> [1, -2]
        let mut adapter = MaskAdapter::<f64>::init(2, 1);
        adapter.w1 = Tensor::zeros(vec![2, 2]);
        adapter.w2 = Tensor::zeros(vec![2, 2]);
        assert_eq!(forward_with(&adapter, &[2.0, -4.0]), vec![1.0, -2.0]);
    }

    #[test]
    fn identity_mlp_adds_relu_branch() {
        // W1 = W2 = I, biases 0: f_i = g + relu(g) with g = [1, -2] -> [2, -2]
        let mut adapter = MaskAdapter::<f64>::init(2, 1);
        adapter.w1 = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        adapter.w2 = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(forward_with(&adapter, &[2.0, -4.0]), vec![2.0, -2.0]);
    }

    #[test]
    fn zero_feature_with_zero_biases_maps_to_zero() {
        let mut adapter = MaskAdapter::<f64>::init(3, 2);
        adapter.w1 = Tensor::zeros(vec![3, 3]);
        adapter.w2 = Tensor::zeros(vec![3, 3]);
        assert_eq!(forward_with(&adapter, &[0.0, 0.0, 0.0]), vec![0.0; 3]);
    }

    #[test]
    fn mask_strictly_inside_unit_interval() {
        let mut adapter = MaskAdapter::<f32>::init(4, 3);
        adapter.m_raw = Tensor::new(vec![4], vec![-8.0, -1.0, 1.0, 8.0]).unwrap();
        let m = adapter.mask();
        assert!(m.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn gradients_reach_only_adapter_parameters() {
        let adapter = MaskAdapter::<f64>::init(3, 5);
        let mut tape = Tape::<f64>::new();
        let staged = adapter.stage(&mut tape, true).unwrap();
        let fp = tape
            .constant(Tensor::new(vec![3], vec![0.5, -0.25, 1.0]).unwrap())
            .unwrap();
        let out = adapter_forward(&mut tape, &staged, fp).unwrap();
        let loss = tape.mean_all(out).unwrap();
        tape.backward(loss).unwrap();
        assert!(tape.grad(staged.m_raw).unwrap().data().iter().any(|&v| v != 0.0));
        assert!(tape.grad(fp).is_none());
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let adapter = MaskAdapter::<f32>::init(4, 1);
        let mut tape = Tape::<f32>::new();
        let staged = adapter.stage(&mut tape, false).unwrap();
        let fp = tape.constant(Tensor::zeros(vec![3])).unwrap();
        assert!(matches!(
            adapter_forward(&mut tape, &staged, fp),
            Err(Error::Dimension { .. })
        ));
    }
}
