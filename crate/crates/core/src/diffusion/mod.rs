//! Noise schedule, forward noising, the conditional denoiser, and DDIM
//! sampling.

pub mod denoiser;
pub mod sampler;
pub mod schedule;

pub use denoiser::{Condition, Denoiser, DenoiserConfig, LoraSite, StagedDenoiser};
pub use sampler::{
    ddim_clean_estimate, ddim_renoise, ddim_sample_opts, ddim_sample_with, ddim_step,
    ddim_timesteps,
};
pub use schedule::{NoiseSchedule, ScheduleKind};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Forward noising on the tape: `z_t = alpha_t * z + sigma_t * eps`.
pub fn forward_noise<E: Scalar>(
    tape: &mut Tape<E>,
    z: Var,
    t: usize,
    eps: Var,
    sched: &NoiseSchedule<E>,
) -> Result<Var> {
    let (zs, es) = (tape.value(z).shape().to_vec(), tape.value(eps).shape().to_vec());
    if zs != es {
        return Err(Error::Dimension { op: "forward_noise", lhs: zs, rhs: es });
    }
    let alpha = sched.alpha(t)?;
    let sigma = sched.sigma(t)?;
    let az = tape.scale(z, alpha)?;
    let se = tape.scale(eps, sigma)?;
    tape.add(az, se)
}
