//! Shared test oracles.
//!
//! The central-difference gradient oracle lives here, in test code only, and
//! is deliberately independent of the tape: it re-evaluates the full forward
//! function at perturbed inputs and never inspects adjoints.

#![allow(dead_code)]

/// Central finite differences of a scalar function at `x`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = f(&probe);
        probe[i] = orig - h;
        let fm = f(&probe);
        probe[i] = orig;
        out.push((fp - fm) / (2.0 * h));
    }
    out
}

/// Element-wise relative error with clamped denominators.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], clamp: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(clamp))
        .fold(0.0, f64::max)
}
