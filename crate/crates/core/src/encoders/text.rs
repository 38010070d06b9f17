//! Frozen toy text encoder: embedding table plus one token-mixing block.
//!
//! Plays the role of a pretrained text encoder as a fixed feature map: the
//! weights are sampled once from a documented seed and never trained.
//! Encoding runs on plain kernels; no gradients ever flow into it.

use crate::error::{Error, Result};
use crate::kernels as k;
use crate::rng::{normal_tensor, rng_from_seed, subseed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct TextEncoder<E> {
    vocab_size: usize,
    seq_len: usize,
    dim: usize,
    embed: Tensor<E>,
    pos: Tensor<E>,
    /// Cross-token mixing matrix `(seq_len, seq_len)`.
    mix: Tensor<E>,
    w1: Tensor<E>,
    b1: Tensor<E>,
    w2: Tensor<E>,
    b2: Tensor<E>,
}

impl<E: Scalar> TextEncoder<E> {
    pub fn init(vocab_size: usize, seq_len: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(subseed(seed, "text-encoder"));
        TextEncoder {
            vocab_size,
            seq_len,
            dim,
            embed: normal_tensor(&mut rng, vec![vocab_size, dim], 1.0),
            pos: normal_tensor(&mut rng, vec![seq_len, dim], 0.3),
            mix: normal_tensor(&mut rng, vec![seq_len, seq_len], 1.0 / (seq_len as f64).sqrt()),
            w1: normal_tensor(&mut rng, vec![dim, dim], 1.0 / (dim as f64).sqrt()),
            b1: Tensor::zeros(vec![dim]),
            w2: normal_tensor(&mut rng, vec![dim, dim], 1.0 / (dim as f64).sqrt()),
            b2: Tensor::zeros(vec![dim]),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Contextualized token matrix `(seq_len, dim)` for an id sequence.
    pub fn encode(&self, ids: &[usize]) -> Result<Tensor<E>> {
        if ids.len() != self.seq_len {
            return Err(Error::Dimension {
                op: "encode_text",
                lhs: vec![ids.len()],
                rhs: vec![self.seq_len],
            });
        }
        let (l, d) = (self.seq_len, self.dim);
        let mut x = vec![E::ZERO; l * d];
        for (row, &id) in ids.iter().enumerate() {
            if id >= self.vocab_size {
                return Err(Error::Range {
                    what: "token id",
                    got: id,
                    expected: format!("< {}", self.vocab_size),
                });
            }
            for j in 0..d {
                x[row * d + j] = self.embed.data()[id * d + j] + self.pos.data()[row * d + j];
            }
        }
        // cross-token mixing with residual
        let mixed = k::matmul(self.mix.data(), &x, l, l, d);
        let h = k::ew_add(&x, &mixed);
        // channel MLP with residual
        let a = k::add_bias_row(&k::matmul_nt(&h, self.w1.data(), l, d, d), self.b1.data(), l, d);
        let a = k::relu(&a);
        let m = k::add_bias_row(&k::matmul_nt(&a, self.w2.data(), l, d, d), self.b2.data(), l, d);
        let out = k::ew_add(&h, &m);
        Tensor::new(vec![l, d], out)
    }

    /// Checksum of all frozen weights (frozen-ness witness for tests).
    pub fn weight_checksum(&self) -> f64 {
        [&self.embed, &self.pos, &self.mix, &self.w1, &self.b1, &self.w2, &self.b2]
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v.to_f64())
            .sum()
    }
}
