//! Low-rank adaptation of the denoiser's registered linear maps.
//!
//! Each wrapped map keeps its frozen base `W0 (d, k)` inside the denoiser;
//! the trainable state is the pair `A (r, k)` (Gaussian init) and `B (d, r)`
//! (zero init), applied additively as `W0 + B A` with unit scaling. Zero `B`
//! makes injection an exact no-op at initialization.

use std::collections::HashMap;

use crate::autodiff::{Tape, Var};
use crate::diffusion::{Denoiser, LoraSite};
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, rng_from_seed, subseed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Standard deviation of the Gaussian `A` initialization.
pub const LORA_INIT_STD: f64 = 0.02;

/// Trainable low-rank factors for one registered map.
#[derive(Debug, Clone)]
pub struct LoraLayer<E> {
    pub a: Tensor<E>,
    pub b: Tensor<E>,
    pub rank: usize,
}

/// Freshly initialize one layer: `A ~ N(0, 0.02^2)` from the seeded
/// generator, `B = 0`.
pub fn init_lora<E: Scalar>(d: usize, k: usize, rank: usize, seed: u64) -> Result<LoraLayer<E>> {
    if rank < 1 {
        return Err(Error::Config("lora rank must be >= 1".into()));
    }
    if rank > d.min(k) {
        return Err(Error::Config(format!(
            "lora rank {rank} exceeds min(d, k) = {}",
            d.min(k)
        )));
    }
    let mut rng = rng_from_seed(seed);
    Ok(LoraLayer {
        a: normal_tensor(&mut rng, vec![rank, k], LORA_INIT_STD),
        b: Tensor::zeros(vec![d, rank]),
        rank,
    })
}

/// Apply a wrapped map on the tape: `y = x W0^T + (x A^T) B^T`.
///
/// Gradients flow only into `a`/`b` when they are staged as trainable
/// leaves; `w0` stays a constant.
pub fn lora_forward<E: Scalar>(
    tape: &mut Tape<E>,
    x: Var,
    w0: Var,
    lora: Option<(Var, Var)>,
) -> Result<Var> {
    let base = tape.matmul_nt(x, w0)?;
    match lora {
        None => Ok(base),
        Some((a, b)) => {
            let xa = tape.matmul_nt(x, a)?;
            let delta = tape.matmul_nt(xa, b)?;
            tape.add(base, delta)
        }
    }
}

/// The full set of low-rank factors, one per registry site, in canonical
/// registry order.
#[derive(Debug, Clone)]
pub struct LoraSet<E> {
    entries: Vec<(LoraSite, LoraLayer<E>)>,
}

impl<E: Scalar> LoraSet<E> {
    /// Wrap every map in the denoiser's registry exactly once.
    pub fn inject(denoiser: &Denoiser<E>, rank: usize, seed: u64) -> Result<Self> {
        let mut entries = Vec::new();
        for site in denoiser.lora_sites() {
            let layer = init_lora(site.d, site.k, rank, subseed(seed, &format!("lora.{}", site.name)))?;
            entries.push((site, layer));
        }
        Ok(LoraSet { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sites(&self) -> impl Iterator<Item = &LoraSite> {
        self.entries.iter().map(|(s, _)| s)
    }

    pub fn layer(&self, name: &str) -> Option<&LoraLayer<E>> {
        self.entries.iter().find(|(s, _)| s.name == name).map(|(_, l)| l)
    }

    /// Trainable parameter count by the closed-form rank formula:
    /// sum over sites of `(d + k) * r`.
    pub fn param_count_formula(&self) -> usize {
        self.entries
            .iter()
            .map(|(s, l)| (s.d + s.k) * l.rank)
            .sum()
    }

    /// Visit trainable tensors in canonical order (`a` then `b` per site).
    pub fn visit_params(&self, mut f: impl FnMut(&str, &Tensor<E>)) {
        for (site, layer) in &self.entries {
            f(&format!("lora.{}.a", site.name), &layer.a);
            f(&format!("lora.{}.b", site.name), &layer.b);
        }
    }

    pub fn visit_params_mut(&mut self, mut f: impl FnMut(&str, &mut Tensor<E>)) {
        for (site, layer) in &mut self.entries {
            f(&format!("lora.{}.a", site.name), &mut layer.a);
            f(&format!("lora.{}.b", site.name), &mut layer.b);
        }
    }

    /// Stage all factors on a tape; returns the site-name -> `(A, B)` map
    /// the denoiser forward consumes.
    pub fn stage(&self, tape: &mut Tape<E>, trainable: bool) -> Result<StagedLora> {
        let mut map = HashMap::new();
        let mut order = Vec::new();
        for (site, layer) in &self.entries {
            let a = tape.leaf(layer.a.clone(), trainable)?;
            let b = tape.leaf(layer.b.clone(), trainable)?;
            map.insert(site.name.clone(), (a, b));
            order.push(site.name.clone());
        }
        Ok(StagedLora { map, order })
    }

    pub fn cast<F: Scalar>(&self) -> LoraSet<F> {
        LoraSet {
            entries: self
                .entries
                .iter()
                .map(|(s, l)| {
                    (
                        s.clone(),
                        LoraLayer { a: l.a.cast(), b: l.b.cast(), rank: l.rank },
                    )
                })
                .collect(),
        }
    }
}

/// Tape handles for a staged [`LoraSet`].
pub struct StagedLora {
    pub map: HashMap<String, (Var, Var)>,
    pub order: Vec<String>,
}

impl StagedLora {
    /// Gradient handles in canonical order (`a` then `b` per site), aligned
    /// with [`LoraSet::visit_params`].
    pub fn vars_in_order(&self) -> Vec<(String, Var)> {
        let mut out = Vec::new();
        for name in &self.order {
            let (a, b) = self.map[name];
            out.push((format!("lora.{name}.a"), a));
            out.push((format!("lora.{name}.b"), b));
        }
        out
    }
}
