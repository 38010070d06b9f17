//! Per-step loss assembly.
//!
//! One step draws a single `(eps, t)` pair and reuses it for both denoising
//! passes: the precise pass conditions on the token sequence with the
//! per-image visual embedding broadcast-added to every token, the weak pass
//! conditions on the token sequence alone. The contrastive term pushes the
//! mean-pooled token embedding and the visual embedding apart. The reported
//! total is composed as `(L1 + L2) + L3`, bit-exactly.

use std::collections::HashMap;

use crate::adaptation::{adapter_forward, StagedAdapter};
use crate::autodiff::{Tape, Var};
use crate::diffusion::{forward_noise, Denoiser, NoiseSchedule, StagedDenoiser};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numerical stabilizer in the cosine denominator.
pub const COSINE_TAU: f64 = 1e-8;

/// The identity-irrelevant branch staged on a tape: either the trainable
/// mask adapter or (for the adapter-less ablation) a frozen projection.
pub enum StagedBranch {
    Adapter(StagedAdapter),
    /// Frozen `(dim, dim)` matrix applied as `f_i = P f_p`.
    FrozenProjection(Var),
}

impl StagedBranch {
    /// Produce the identity-irrelevant embedding from a pooled image
    /// feature leaf.
    pub fn forward<E: Scalar>(&self, tape: &mut Tape<E>, f_p: Var) -> Result<Var> {
        match self {
            StagedBranch::Adapter(a) => adapter_forward(tape, a, f_p),
            StagedBranch::FrozenProjection(p) => {
                let dim = tape.value(f_p).numel();
                let row = tape.reshape(f_p, vec![1, dim])?;
                let out = tape.matmul_nt(row, *p)?;
                tape.reshape(out, vec![dim])
            }
        }
    }
}

/// Tape handles of one step's loss terms.
pub struct LossParts {
    pub l1: Var,
    pub l2: Var,
    pub l3: Var,
    pub total: Var,
}

/// Assemble the three-term objective for one image.
///
/// `eps` and `t` are drawn once by the caller; both denoising passes see
/// the identical noisy latent. With a zero weight the corresponding term is
/// skipped entirely and contributes an exact 0 to the total.
#[allow(clippy::too_many_arguments)]
pub fn compute_losses<E: Scalar>(
    tape: &mut Tape<E>,
    denoiser: &Denoiser<E>,
    staged_den: &StagedDenoiser,
    lora: Option<&HashMap<String, (Var, Var)>>,
    branch: &StagedBranch,
    sched: &NoiseSchedule<E>,
    fs_tokens: &Tensor<E>,
    f_p: &Tensor<E>,
    z: &Tensor<E>,
    eps: Tensor<E>,
    t: usize,
    lambda2: f64,
    lambda3: f64,
) -> Result<LossParts> {
    let zc = tape.constant(z.clone())?;
    let epsc = tape.constant(eps)?;
    let z_t = forward_noise(tape, zc, t, epsc, sched)?;

    let fsc = tape.constant(fs_tokens.clone())?;
    let fpc = tape.constant(f_p.clone())?;
    let f_i = branch.forward(tape, fpc)?;

    // precise pass: visual embedding broadcast onto every token
    let cond_full = tape.add_bias_row(fsc, f_i)?;
    let coeffs = (sched.alpha(t)?, sched.sigma(t)?);
    let eps_hat = denoiser.predict_noise(tape, staged_den, lora, z_t, t, coeffs, cond_full)?;
    let l1 = tape.mse(eps_hat, epsc)?;

    // weak pass: text tokens alone, same (eps, t)
    let l2 = if lambda2 > 0.0 {
        let eps_hat_weak = denoiser.predict_noise(tape, staged_den, lora, z_t, t, coeffs, fsc)?;
        let raw = tape.mse(eps_hat_weak, epsc)?;
        tape.scale(raw, E::from_f64(lambda2))?
    } else {
        tape.constant(Tensor::scalar(E::ZERO))?
    };

    // contrastive pass: pooled text embedding vs visual embedding
    let l3 = if lambda3 > 0.0 {
        let pooled = tape.mean_rows(fsc)?;
        let cos = tape.cosine(pooled, f_i, E::from_f64(COSINE_TAU))?;
        tape.scale(cos, E::from_f64(lambda3))?
    } else {
        tape.constant(Tensor::scalar(E::ZERO))?
    };

    let partial = tape.add(l1, l2)?;
    let total = tape.add(partial, l3)?;
    Ok(LossParts { l1, l2, l3, total })
}
