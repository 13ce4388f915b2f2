use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::mdp::{FiniteConcurrentMdp, QTable};
use super::operators::{backup_with, Operator};
use crate::error::{ensure, Result};

/// Slack allowed between an observed modulus and its bound.
pub const CONTRACTION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialModulus {
    pub trial: usize,
    pub modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateReport {
    pub trials: Vec<TrialModulus>,
    pub max_observed_modulus: f64,
    /// `max_ℓ γ^ℓ`: the latency-stage contraction constant.
    pub bound: f64,
    /// `max_ℓ γ^ℓ γ^(1-ℓ)`: the constant of the full two-stage step.
    pub step_bound: f64,
}

impl CertificateReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.max_observed_modulus <= self.bound + tolerance
    }

    /// Rows `(trial, modulus, bound)` as CSV, with a header.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "modulus", "bound"])?;
        for t in &self.trials {
            w.write_record([t.trial.to_string(), fmt_f64(t.modulus), fmt_f64(self.bound)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.17e}")
}

/// Empirical contraction modulus of the concurrent operator on `trials`
/// pairs of random Q-tables with entries uniform in `[-10, 10]`. Trial 0
/// uses a constant-shift pair instead.
///
/// Trials run in parallel; each gets its own RNG stream derived from one
/// draw of `rng`, so the report does not depend on scheduling.
pub fn contraction_certificate<R: Rng + ?Sized>(
    mdp: &FiniteConcurrentMdp,
    trials: usize,
    rng: &mut R,
) -> Result<CertificateReport> {
    certificate_with(mdp, trials, rng, Operator::Concurrent)
}

pub fn certificate_with<R: Rng + ?Sized>(
    mdp: &FiniteConcurrentMdp,
    trials: usize,
    rng: &mut R,
    op: Operator,
) -> Result<CertificateReport> {
    ensure!(trials >= 1, "certificate needs at least one trial");
    let base: u64 = rng.random();
    let rows: Vec<TrialModulus> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = ChaCha8Rng::seed_from_u64(base);
            r.set_stream(trial as u64);
            TrialModulus {
                trial,
                modulus: trial_modulus(mdp, op, trial == 0, &mut r),
            }
        })
        .collect();
    let max_observed_modulus = rows.iter().map(|t| t.modulus).fold(0.0, f64::max);
    Ok(CertificateReport {
        trials: rows,
        max_observed_modulus,
        bound: mdp.latency_discount.iter().copied().fold(0.0, f64::max),
        step_bound: (0..mdp.n_latencies())
            .map(|l| mdp.step_discount(l))
            .fold(0.0, f64::max),
    })
}

/// A shifted pair `Q2 = Q1 + c` probes the direction in which kernel
/// averaging cannot shrink the gap.
fn trial_modulus<R: Rng + ?Sized>(
    mdp: &FiniteConcurrentMdp,
    op: Operator,
    shifted: bool,
    rng: &mut R,
) -> f64 {
    loop {
        let q1 = QTable::random(mdp, -10.0, 10.0, rng);
        let q2 = if shifted {
            let c: f64 = rng.random_range(1.0..10.0);
            QTable {
                values: q1.values.iter().map(|v| v + c).collect(),
                ..q1.clone()
            }
        } else {
            QTable::random(mdp, -10.0, 10.0, rng)
        };
        let gap = q1.sup_distance(&q2);
        if gap == 0.0 {
            continue;
        }
        let t1 = backup_with(mdp, &q1, op);
        let t2 = backup_with(mdp, &q2, op);
        return t1.sup_distance(&t2) / gap;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::mdp::SpilloverMode;

    #[test]
    fn half_latency_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = FiniteConcurrentMdp::random(5, 3, vec![0.5], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        let rep = contraction_certificate(&mdp, 200, &mut rng).unwrap();
        assert!((rep.bound - 0.948_683_298_050_513_8).abs() < 1e-15);
        assert!(rep.holds(CONTRACTION_TOLERANCE));
        assert!(rep.max_observed_modulus <= rep.step_bound + CONTRACTION_TOLERANCE);
        assert_eq!(rep.trials.len(), 200);
    }

    #[test]
    fn undiscounted_is_non_expansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp =
            FiniteConcurrentMdp::random(4, 2, vec![0.3, 0.6], 1.0, SpilloverMode::Iid, &mut rng)
                .unwrap();
        let rep = contraction_certificate(&mdp, 50, &mut rng).unwrap();
        assert_eq!(rep.bound, 1.0);
        assert!(rep.max_observed_modulus <= 1.0 + CONTRACTION_TOLERANCE);
    }

    #[test]
    fn zero_latency_step_constant_is_gamma() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = FiniteConcurrentMdp::random(4, 3, vec![0.0], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        let rep = contraction_certificate(&mdp, 100, &mut rng).unwrap();
        assert_eq!(rep.step_bound, 0.9);
        assert!(rep.max_observed_modulus <= 0.9 + CONTRACTION_TOLERANCE);
    }

    #[test]
    fn sabotaged_operator_breaks_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = FiniteConcurrentMdp::random(4, 2, vec![0.5], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        let rep = certificate_with(&mdp, 20, &mut rng, Operator::Sabotaged).unwrap();
        assert!(!rep.holds(CONTRACTION_TOLERANCE));
    }

    #[test]
    fn report_is_seed_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = FiniteConcurrentMdp::random(4, 2, vec![0.5], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        let a = contraction_certificate(&mdp, 30, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = contraction_certificate(&mdp, 30, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("trial,modulus,bound\n"));
        assert_eq!(text.lines().count(), 31);
    }

    #[test]
    fn zero_trials_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = FiniteConcurrentMdp::random(2, 2, vec![0.5], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        assert!(contraction_certificate(&mdp, 0, &mut rng).is_err());
    }
}
