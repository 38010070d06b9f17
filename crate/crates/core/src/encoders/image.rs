//! Frozen toy image encoder: three strided conv stages and a global
//! average pool, producing the pooled visual feature the adapter consumes.
//!
//! Like the text encoder it is a fixed random feature map, never trained;
//! its output is treated as a leaf by the tuning loss.

use crate::error::{Error, Result};
use crate::kernels as k;
use crate::rng::{normal_tensor, rng_from_seed, subseed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

struct Stage<E> {
    w: Tensor<E>,
    b: Tensor<E>,
    ci: usize,
    co: usize,
}

pub struct ImageEncoder<E> {
    input: (usize, usize, usize),
    dim: usize,
    stages: Vec<Stage<E>>,
}

impl<E: Scalar> ImageEncoder<E> {
    /// Channel plan: three stride-2 stages ramping to `dim` channels.
    pub fn init(input: (usize, usize, usize), dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(subseed(seed, "image-encoder"));
        let plan = [
            (input.0, (dim / 4).max(2)),
            ((dim / 4).max(2), (dim / 2).max(2)),
            ((dim / 2).max(2), dim),
        ];
        let stages = plan
            .iter()
            .map(|&(ci, co)| Stage {
                w: normal_tensor(&mut rng, vec![co, ci, 3, 3], 1.0 / ((ci * 9) as f64).sqrt()),
                b: Tensor::zeros(vec![co]),
                ci,
                co,
            })
            .collect();
        ImageEncoder { input, dim, stages }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Pooled feature vector `(dim)` for an image in `[-1, 1]`.
    pub fn encode(&self, x: &Tensor<E>) -> Result<Tensor<E>> {
        let (c, h, w) = self.input;
        if x.shape() != [c, h, w] {
            return Err(Error::Dimension {
                op: "encode_image",
                lhs: x.shape().to_vec(),
                rhs: vec![c, h, w],
            });
        }
        if x.data().iter().any(|v| v.to_f64() < -1.0 || v.to_f64() > 1.0) {
            return Err(Error::Input("image values must lie in [-1, 1]".into()));
        }
        let (mut buf, mut hh, mut ww) = (x.data().to_vec(), h, w);
        for stage in &self.stages {
            buf = k::conv2d(&buf, stage.w.data(), Some(stage.b.data()), stage.ci, hh, ww, stage.co, 2);
            hh = k::conv_out_extent(hh, 2);
            ww = k::conv_out_extent(ww, 2);
            buf = k::relu(&buf);
        }
        // global average pool to (dim)
        let hw = hh * ww;
        let inv = E::ONE / E::from_f64(hw as f64);
        let mut pooled: Vec<E> = (0..self.dim)
            .map(|ch| {
                let mut acc = E::ZERO;
                for i in 0..hw {
                    acc += buf[ch * hw + i];
                }
                acc * inv
            })
            .collect();
        // normalize to sqrt(dim) scale so the visual feature is
        // commensurate with text-token embeddings downstream
        let norm = pooled.iter().map(|v| *v * *v).sum::<E>().sqrt();
        let target = E::from_f64((self.dim as f64).sqrt());
        let gain = target / (norm + E::from_f64(1e-12));
        pooled.iter_mut().for_each(|v| *v *= gain);
        Tensor::new(vec![self.dim], pooled)
    }

    pub fn weight_checksum(&self) -> f64 {
        self.stages
            .iter()
            .flat_map(|s| s.w.data().iter().chain(s.b.data().iter()))
            .map(|v| v.to_f64())
            .sum()
    }
}

/// Identity latent codec: pixel-space diffusion, exact round trip.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityCodec;

impl IdentityCodec {
    pub fn encode<E: Scalar>(&self, x: &Tensor<E>) -> Tensor<E> {
        x.clone()
    }

    pub fn decode<E: Scalar>(&self, z: &Tensor<E>) -> Tensor<E> {
        z.clone()
    }
}
