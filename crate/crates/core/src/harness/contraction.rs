use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::tabular::certificate::{certificate_with, fmt_f64, CONTRACTION_TOLERANCE};
use crate::tabular::FiniteConcurrentMdp;
use crate::tabular::{
    fine_discretization_check, ContinuousConcurrentModel, Operator, RefinementReport, SpilloverMode,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub max_rate: f64,
    /// Discount per unit time.
    pub gamma: f64,
    pub period: f64,
    pub latency: f64,
    pub levels: Vec<usize>,
    pub trials: usize,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            n_states: 4,
            n_actions: 2,
            max_rate: 1.0,
            gamma: 0.9,
            period: 1.0,
            latency: 0.3,
            levels: vec![1, 2, 4, 8],
            trials: 50,
        }
    }
}

/// Grid of random tabular MDPs whose operator is checked for contraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractionConfig {
    pub n_states: usize,
    pub n_actions: usize,
    pub gammas: Vec<f64>,
    /// Latency fractions `t_AS / H`.
    pub latencies: Vec<f64>,
    pub mdps_per_cell: usize,
    pub trials: usize,
    pub spillover: SpilloverMode,
    pub operator: Operator,
    pub tolerance: f64,
    /// Set to `false` to skip the refinement check.
    pub refine: bool,
    pub refinement: RefinementConfig,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        ContractionConfig {
            n_states: 6,
            n_actions: 3,
            gammas: vec![0.5, 0.9, 0.99],
            latencies: vec![0.0, 0.25, 0.5, 0.9],
            mdps_per_cell: 5,
            trials: 200,
            spillover: SpilloverMode::Fixed,
            operator: Operator::Concurrent,
            tolerance: CONTRACTION_TOLERANCE,
            refine: true,
            refinement: RefinementConfig::default(),
        }
    }
}

impl ContractionConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n_states >= 1 && self.n_actions >= 1,
            "need at least one state and action"
        );
        ensure!(
            !self.gammas.is_empty() && !self.latencies.is_empty(),
            "empty gamma or latency grid"
        );
        ensure!(
            self.mdps_per_cell >= 1 && self.trials >= 1,
            "need at least one MDP and trial per cell"
        );
        ensure!(self.tolerance >= 0.0, "tolerance must be non-negative");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulusRow {
    pub gamma: f64,
    pub latency: f64,
    pub mdp: usize,
    pub trial: usize,
    pub modulus: f64,
    pub bound: f64,
}

impl ModulusRow {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.modulus <= self.bound + tolerance
    }
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub rows: Vec<ModulusRow>,
    pub refinement: Option<RefinementReport>,
    pub tolerance: f64,
}

impl ContractionReport {
    /// First row whose modulus exceeds its bound.
    pub fn first_violation(&self) -> Option<&ModulusRow> {
        self.rows.iter().find(|r| !r.holds(self.tolerance))
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                if r.bound > 0.0 {
                    r.modulus / r.bound
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn holds(&self) -> bool {
        self.first_violation().is_none()
            && self
                .refinement
                .as_ref()
                .is_none_or(|r| r.holds(self.tolerance))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gamma", "latency", "mdp", "trial", "modulus", "bound"])?;
        for r in &self.rows {
            w.write_record([
                r.gamma.to_string(),
                r.latency.to_string(),
                r.mdp.to_string(),
                r.trial.to_string(),
                fmt_f64(r.modulus),
                fmt_f64(r.bound),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical contraction moduli over every `(γ, ℓ)` cell, each against the
/// bound `γ^ℓ`, plus the refinement check when enabled.
pub fn verify_contraction(cfg: &ContractionConfig, seed: u64) -> Result<ContractionReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &gamma in &cfg.gammas {
        for &latency in &cfg.latencies {
            for mdp_idx in 0..cfg.mdps_per_cell {
                let mdp = FiniteConcurrentMdp::random(
                    cfg.n_states,
                    cfg.n_actions,
                    vec![latency],
                    gamma,
                    cfg.spillover,
                    &mut rng,
                )?;
                let rep = certificate_with(&mdp, cfg.trials, &mut rng, cfg.operator)?;
                rows.extend(rep.trials.iter().map(|t| ModulusRow {
                    gamma,
                    latency,
                    mdp: mdp_idx,
                    trial: t.trial,
                    modulus: t.modulus,
                    bound: rep.bound,
                }));
            }
        }
    }
    let refinement = if cfg.refine {
        let r = &cfg.refinement;
        let model = ContinuousConcurrentModel::random(
            r.n_states,
            r.n_actions,
            r.max_rate,
            r.gamma,
            r.period,
            r.latency,
            &mut rng,
        )?;
        Some(fine_discretization_check(
            &model, &r.levels, r.trials, &mut rng,
        )?)
    } else {
        None
    };
    Ok(ContractionReport {
        rows,
        refinement,
        tolerance: cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ContractionConfig {
        ContractionConfig {
            gammas: vec![0.9],
            latencies: vec![0.0, 0.5],
            mdps_per_cell: 2,
            trials: 10,
            refine: false,
            ..Default::default()
        }
    }

    #[test]
    fn concurrent_operator_passes() {
        let rep = verify_contraction(&small(), 1).unwrap();
        assert_eq!(rep.rows.len(), 2 * 2 * 10);
        assert!(rep.holds(), "violation {:?}", rep.first_violation());
    }

    #[test]
    fn sabotaged_operator_is_caught() {
        let cfg = ContractionConfig {
            operator: Operator::Sabotaged,
            ..small()
        };
        assert!(verify_contraction(&cfg, 1)
            .unwrap()
            .first_violation()
            .is_some());
    }

    #[test]
    fn csv_has_one_row_per_trial() {
        let rep = verify_contraction(&small(), 2).unwrap();
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), rep.rows.len() + 1);
        assert!(text.starts_with("gamma,latency,mdp,trial,modulus,bound"));
    }
}
