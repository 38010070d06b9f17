//! The evaluation report and its CSV serialization.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::csvio::ReportRow;

/// Metrics of one evaluated checkpoint.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Mean pairwise embedding cosine between generations and exemplars.
    pub identity_score: f64,
    /// Fraction of prompt factors matched by generations.
    pub prompt_fidelity: f64,
    /// (subject accuracy, background leak) of text-only generation.
    pub fs_only: (f64, f64),
    /// (subject accuracy, background-color accuracy) of visual-only
    /// generation.
    pub fi_only: (f64, f64),
    /// (eta, cosine to reference) pairs; empty when the sweep was not run.
    pub eta_curve: Vec<(f64, f64)>,
    /// Hex SHA-256 of the canonical run-config text.
    pub config_digest: String,
    pub seed: u64,
    pub n_samples: usize,
}

pub fn config_digest_hex(config_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Input(format!("{name} {v} outside [0, 1]")));
            }
            Ok(())
        };
        frac("prompt_fidelity", self.prompt_fidelity)?;
        frac("fs_only subject accuracy", self.fs_only.0)?;
        frac("fs_only background accuracy", self.fs_only.1)?;
        frac("fi_only subject accuracy", self.fi_only.0)?;
        frac("fi_only background accuracy", self.fi_only.1)?;
        if !(-1.0..=1.0).contains(&self.identity_score) {
            return Err(Error::Input(format!(
                "identity score {} outside [-1, 1]",
                self.identity_score
            )));
        }
        for w in self.eta_curve.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Input("eta values must be strictly increasing".into()));
            }
        }
        for (_, cos) in &self.eta_curve {
            if !(-1.0 - 1e-6..=1.0 + 1e-6).contains(cos) {
                return Err(Error::Input(format!("eta cosine {cos} outside [-1, 1]")));
            }
        }
        Ok(())
    }

    /// One metric per row, eta entries as `eta_<value>` rows, digest as a
    /// textual row.
    pub fn to_rows(&self) -> Vec<ReportRow> {
        let mut rows = vec![
            ReportRow::metric("identity_score", self.identity_score, self.seed, self.n_samples),
            ReportRow::metric("prompt_fidelity", self.prompt_fidelity, self.seed, self.n_samples),
            ReportRow::metric("fs_subject_acc", self.fs_only.0, self.seed, self.n_samples),
            ReportRow::metric("fs_background_acc", self.fs_only.1, self.seed, self.n_samples),
            ReportRow::metric("fi_subject_acc", self.fi_only.0, self.seed, self.n_samples),
            ReportRow::metric("fi_background_acc", self.fi_only.1, self.seed, self.n_samples),
        ];
        for (eta, cos) in &self.eta_curve {
            rows.push(ReportRow::metric(format!("eta_{eta}"), *cos, self.seed, self.n_samples));
        }
        rows.push(ReportRow::text("config_digest", self.config_digest.clone(), self.seed));
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EvalReport {
        EvalReport {
            identity_score: 0.8,
            prompt_fidelity: 0.5,
            fs_only: (0.9, 0.2),
            fi_only: (0.3, 0.8),
            eta_curve: vec![(0.0, 0.1), (0.2, 0.3), (0.4, 0.5)],
            config_digest: "ab".into(),
            seed: 1,
            n_samples: 32,
        }
    }

    #[test]
    fn valid_report_passes() {
        sample().validate().unwrap();
    }

    #[test]
    fn bounds_are_enforced() {
        let mut r = sample();
        r.fs_only.0 = 1.2;
        assert!(r.validate().is_err());
        let mut r = sample();
        r.eta_curve = vec![(0.2, 0.0), (0.2, 0.1)];
        assert!(r.validate().is_err());
        let mut r = sample();
        r.identity_score = -1.5;
        assert!(r.validate().is_err());
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(config_digest_hex("x"), config_digest_hex("x"));
        assert_ne!(config_digest_hex("x"), config_digest_hex("y"));
        assert_eq!(config_digest_hex("").len(), 64);
    }
}
