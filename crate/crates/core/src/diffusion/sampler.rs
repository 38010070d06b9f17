//! Deterministic DDIM sampling.
//!
//! The sampler walks a uniformly strided, strictly decreasing timestep
//! subsequence from T down to the clean anchor t = 0. At each step the
//! epsilon prediction is folded into a clean estimate and re-noised:
//! `z0 = (z_t - sigma_t * eps) / alpha_t`, then
//! `z_next = alpha_next * z0 + sigma_next * eps`.

use crate::diffusion::schedule::NoiseSchedule;
use crate::error::{Error, Result};
use crate::kernels as k;
use crate::rng::{normal_tensor, rng_from_seed};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// The descending timestep subsequence for `steps` sampling steps over a
/// T-step schedule: `steps + 1` entries starting at T and ending at 0.
pub fn ddim_timesteps(t_total: usize, steps: usize) -> Vec<usize> {
    (0..=steps)
        .map(|j| t_total * (steps - j) / steps)
        .collect()
}

/// Sample one latent by iterating DDIM from seeded Gaussian noise.
///
/// `predict` evaluates the noise model at `(z_t, t)`; the caller binds the
/// network, its adaptation state, and the condition into it.
pub fn ddim_sample_with<E: Scalar>(
    predict: impl FnMut(&Tensor<E>, usize) -> Result<Tensor<E>>,
    sched: &NoiseSchedule<E>,
    latent_shape: Vec<usize>,
    steps: usize,
    seed: u64,
) -> Result<Tensor<E>> {
    ddim_sample_opts(predict, sched, latent_shape, steps, seed, false)
}

/// [`ddim_sample_with`] with an optional clamp of each clean estimate to
/// the valid pixel range `[-1, 1]`, for pixel-space latents.
pub fn ddim_sample_opts<E: Scalar>(
    mut predict: impl FnMut(&Tensor<E>, usize) -> Result<Tensor<E>>,
    sched: &NoiseSchedule<E>,
    latent_shape: Vec<usize>,
    steps: usize,
    seed: u64,
    clip_clean: bool,
) -> Result<Tensor<E>> {
    let t_total = sched.timesteps();
    if steps < 1 || steps > t_total {
        return Err(Error::Config(format!(
            "ddim steps must be in 1..={t_total}, got {steps}"
        )));
    }
    let ts = ddim_timesteps(t_total, steps);

    let mut rng = rng_from_seed(seed);
    let mut z = normal_tensor::<E>(&mut rng, latent_shape.clone(), 1.0);

    for j in 0..steps {
        let t = ts[j];
        let t_next = ts[j + 1];
        let eps_hat = predict(&z, t)?;
        if !eps_hat.is_same_shape(&z) {
            return Err(Error::Dimension {
                op: "ddim predict",
                lhs: eps_hat.shape().to_vec(),
                rhs: z.shape().to_vec(),
            });
        }
        let mut z0 = ddim_clean_estimate(&z, &eps_hat, t, sched)?;
        if clip_clean {
            let one = E::ONE;
            z0 = z0.map(|v| v.max(-one).min(one));
        }
        z = ddim_renoise(&z0, &eps_hat, t_next, sched)?;
        if !z.all_finite() {
            return Err(Error::NonFinite(format!("ddim step t={t}")));
        }
    }
    Ok(z)
}

/// Re-noise a clean estimate toward timestep `t_next` (`0` = clean anchor).
pub fn ddim_renoise<E: Scalar>(
    z0: &Tensor<E>,
    eps_hat: &Tensor<E>,
    t_next: usize,
    sched: &NoiseSchedule<E>,
) -> Result<Tensor<E>> {
    let (alpha_next, sigma_next) = sched.coeffs_or_clean(t_next)?;
    let renoised = k::ew_add(
        &k::ew_scale(z0.data(), alpha_next),
        &k::ew_scale(eps_hat.data(), sigma_next),
    );
    Tensor::new(z0.shape().to_vec(), renoised)
}

/// One exact DDIM update from `t` to `t_next` (`t_next = 0` denotes the
/// clean anchor with coefficients `(1, 0)`): re-noised clean estimate with
/// no clamping.
pub fn ddim_step<E: Scalar>(
    z_t: &Tensor<E>,
    eps_hat: &Tensor<E>,
    t: usize,
    t_next: usize,
    sched: &NoiseSchedule<E>,
) -> Result<Tensor<E>> {
    let z0 = ddim_clean_estimate(z_t, eps_hat, t, sched)?;
    ddim_renoise(&z0, eps_hat, t_next, sched)
}

/// The clean estimate `(z_t - sigma_t * eps) / alpha_t` on its own; used by
/// reconstruction oracles.
pub fn ddim_clean_estimate<E: Scalar>(
    z_t: &Tensor<E>,
    eps_hat: &Tensor<E>,
    t: usize,
    sched: &NoiseSchedule<E>,
) -> Result<Tensor<E>> {
    let alpha = sched.alpha(t)?;
    let sigma = sched.sigma(t)?;
    let scaled_eps = k::ew_scale(eps_hat.data(), sigma);
    let z0 = k::ew_scale(&k::ew_sub(z_t.data(), &scaled_eps), E::ONE / alpha);
    Tensor::new(z_t.shape().to_vec(), z0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::schedule::ScheduleKind;

    #[test]
    fn timestep_grid_is_strictly_decreasing_to_zero() {
        for (t_total, steps) in [(100usize, 50usize), (100, 33), (100, 100), (10, 3), (10, 1)] {
            let ts = ddim_timesteps(t_total, steps);
            assert_eq!(ts.len(), steps + 1);
            assert_eq!(ts[0], t_total);
            assert_eq!(*ts.last().unwrap(), 0);
            for w in ts.windows(2) {
                assert!(w[0] > w[1], "not strictly decreasing: {ts:?}");
            }
        }
    }

    #[test]
    fn same_seed_bit_identical_samples() {
        let sched = NoiseSchedule::<f32>::make(20, ScheduleKind::Cosine).unwrap();
        let predict = |z: &Tensor<f32>, _t: usize| Ok(z.map(|v| v * 0.5));
        let a = ddim_sample_with(predict, &sched, vec![2, 4, 4], 10, 99).unwrap();
        let b = ddim_sample_with(predict, &sched, vec![2, 4, 4], 10, 99).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn step_counts_at_full_and_half_depth_produce_finite_latents() {
        let sched = NoiseSchedule::<f32>::make(20, ScheduleKind::Cosine).unwrap();
        for steps in [20usize, 10] {
            let predict = |z: &Tensor<f32>, _t: usize| Ok(z.map(|v| v * 0.1));
            let out = ddim_sample_with(predict, &sched, vec![1, 4, 4], steps, 5).unwrap();
            assert_eq!(out.shape(), &[1, 4, 4]);
            assert!(out.all_finite());
        }
    }

    #[test]
    fn out_of_range_step_count_rejected() {
        let sched = NoiseSchedule::<f32>::make(20, ScheduleKind::Cosine).unwrap();
        let predict = |z: &Tensor<f32>, _t: usize| Ok(z.clone());
        assert!(ddim_sample_with(predict, &sched, vec![1, 2, 2], 0, 1).is_err());
        assert!(ddim_sample_with(predict, &sched, vec![1, 2, 2], 21, 1).is_err());
    }
}
