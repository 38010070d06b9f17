//! Variance-preserving noise schedule.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Schedule functional forms. Only the squared-cosine form is implemented.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Cosine,
}

/// Per-timestep noising coefficients with `alpha_t^2 + sigma_t^2 = 1`.
///
/// Timesteps are 1-based: `alpha(1)` is the near-clean first step and
/// `alpha(T)` the noisiest. Coefficients are computed once in f64 and cast.
#[derive(Debug, Clone)]
pub struct NoiseSchedule<E> {
    timesteps: usize,
    alphas: Vec<E>,
    sigmas: Vec<E>,
}

/// Squared-cosine cumulative signal level, evaluated mid-step so the first
/// step keeps alpha_1 >= 0.99 for every practical T.
fn cosine_alpha_bar(t: usize, t_total: usize) -> f64 {
    const S: f64 = 0.008;
    let f = |u: f64| ((u + S) / (1.0 + S) * std::f64::consts::FRAC_PI_2).cos().powi(2);
    let u = (t as f64 - 0.5) / t_total as f64;
    f(u) / f(0.0)
}

/// Smallest admissible squared signal level at t = 1 (alpha_1 >= 0.99).
const ALPHA_BAR_FLOOR: f64 = 0.9801;

impl<E: Scalar> NoiseSchedule<E> {
    /// Construct a schedule of the given kind over `t_total >= 2` steps.
    pub fn make(t_total: usize, kind: ScheduleKind) -> Result<Self> {
        if t_total < 2 {
            return Err(Error::Config(format!(
                "schedule needs at least 2 timesteps, got {t_total}"
            )));
        }
        let ScheduleKind::Cosine = kind;
        let mut alphas = Vec::with_capacity(t_total);
        let mut sigmas = Vec::with_capacity(t_total);
        for t in 1..=t_total {
            let mut abar = cosine_alpha_bar(t, t_total);
            if t == 1 {
                abar = abar.max(ALPHA_BAR_FLOOR);
            }
            alphas.push(E::from_f64(abar.sqrt()));
            sigmas.push(E::from_f64((1.0 - abar).sqrt()));
        }
        Ok(NoiseSchedule { timesteps: t_total, alphas, sigmas })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t < 1 || t > self.timesteps {
            return Err(Error::Range {
                what: "timestep",
                got: t,
                expected: format!("1..={}", self.timesteps),
            });
        }
        Ok(())
    }

    pub fn alpha(&self, t: usize) -> Result<E> {
        self.check_t(t)?;
        Ok(self.alphas[t - 1])
    }

    pub fn sigma(&self, t: usize) -> Result<E> {
        self.check_t(t)?;
        Ok(self.sigmas[t - 1])
    }

    /// `(alpha, sigma)` with the t = 0 anchor `(1, 0)` admitted for samplers.
    pub fn coeffs_or_clean(&self, t: usize) -> Result<(E, E)> {
        if t == 0 {
            return Ok((E::ONE, E::ZERO));
        }
        self.check_t(t)?;
        Ok((self.alphas[t - 1], self.sigmas[t - 1]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variance_preserving_for_all_t() {
        for t_total in [2usize, 10, 100, 1000] {
            let sched = NoiseSchedule::<f64>::make(t_total, ScheduleKind::Cosine).unwrap();
            for t in 1..=t_total {
                let a = sched.alpha(t).unwrap();
                let s = sched.sigma(t).unwrap();
                assert!(
                    (a * a + s * s - 1.0).abs() < 1e-6,
                    "T={t_total} t={t}: a^2+s^2 = {}",
                    a * a + s * s
                );
            }
        }
    }

    #[test]
    fn monotone_and_near_clean_first_step() {
        for t_total in [2usize, 10, 100, 1000] {
            let sched = NoiseSchedule::<f64>::make(t_total, ScheduleKind::Cosine).unwrap();
            assert!(sched.alpha(1).unwrap() >= 0.99, "T={t_total}");
            assert!(sched.alpha(1).unwrap() > sched.alpha(t_total).unwrap());
            for t in 2..=t_total {
                assert!(sched.alpha(t).unwrap() <= sched.alpha(t - 1).unwrap());
                assert!(sched.sigma(t).unwrap() >= sched.sigma(t - 1).unwrap());
            }
        }
    }

    #[test]
    fn too_few_timesteps_rejected() {
        assert!(NoiseSchedule::<f32>::make(1, ScheduleKind::Cosine).is_err());
        assert!(NoiseSchedule::<f32>::make(0, ScheduleKind::Cosine).is_err());
    }

    #[test]
    fn timestep_range_checked() {
        let sched = NoiseSchedule::<f32>::make(10, ScheduleKind::Cosine).unwrap();
        assert!(sched.alpha(0).is_err());
        assert!(sched.alpha(11).is_err());
        assert!(sched.alpha(10).is_ok());
    }
}
