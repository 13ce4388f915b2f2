//! Continuous-time concurrent model and its fine time-discretizations.
//!
//! A level-`k` discretization splits each stage of a step (latency stage,
//! remainder stage) into `k` sub-steps. Transitions over a sub-step use the
//! exact matrix exponential of the generator, so only the reward quadrature
//! depends on `k`; it uses Simpson's rule on every sub-step.

use rand::Rng;
use serde::Serialize;

use super::certificate::{contraction_certificate, CertificateReport};
use super::mdp::{FiniteConcurrentMdp, SpilloverMode};
use super::operators::value_iteration;
use crate::error::{ensure, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousConcurrentModel {
    pub n_states: usize,
    pub n_actions: usize,
    /// Generator matrices laid out `[a][s][s']`; rows sum to zero.
    pub generators: Vec<f64>,
    /// Reward rate per second, `[s][a]`.
    pub reward_rate: Vec<f64>,
    /// Discount per second.
    pub gamma: f64,
    /// Sampling period `H`, seconds.
    pub period: f64,
    /// Action-selection latency `t_AS`, seconds.
    pub latency: f64,
}

impl ContinuousConcurrentModel {
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        max_rate: f64,
        gamma: f64,
        period: f64,
        latency: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut generators = vec![0.0; n_actions * n_states * n_states];
        for a in 0..n_actions {
            for s in 0..n_states {
                let row = &mut generators[(a * n_states + s) * n_states..][..n_states];
                let mut out = 0.0;
                for (j, g) in row.iter_mut().enumerate() {
                    if j != s {
                        *g = rng.random_range(0.0..max_rate);
                        out += *g;
                    }
                }
                row[s] = -out;
            }
        }
        let reward_rate = (0..n_states * n_actions).map(|_| rng.random()).collect();
        let model = ContinuousConcurrentModel {
            n_states,
            n_actions,
            generators,
            reward_rate,
            gamma,
            period,
            latency,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.gamma > 0.0 && self.gamma <= 1.0,
            "gamma outside (0, 1]"
        );
        ensure!(self.period > 0.0, "period must be positive");
        ensure!(
            (0.0..self.period).contains(&self.latency),
            "latency {} outside [0, {})",
            self.latency,
            self.period
        );
        ensure!(
            self.generators.len() == self.n_actions * self.n_states * self.n_states
                && self.reward_rate.len() == self.n_states * self.n_actions,
            "model tables have the wrong shape"
        );
        for row in self.generators.chunks(self.n_states) {
            let total: f64 = row.iter().sum();
            ensure!(total.abs() < 1e-9, "generator row sums to {total}");
        }
        Ok(())
    }

    fn generator(&self, a: usize) -> &[f64] {
        let n2 = self.n_states * self.n_states;
        &self.generators[a * n2..(a + 1) * n2]
    }

    /// Tabular instance for refinement level `k` (≥ 1).
    pub fn discretize(&self, k: usize) -> Result<FiniteConcurrentMdp> {
        ensure!(k >= 1, "refinement level must be at least 1");
        self.validate()?;
        let n = self.n_states;
        let n_a = self.n_actions;
        let lat = self.latency;
        let rem = self.period - self.latency;

        let mut latency_kernel = Vec::with_capacity(n * n_a * n);
        let mut latency_reward = vec![0.0; n * n_a];
        let mut remainder_kernel = Vec::with_capacity(n * n_a * n);
        let mut remainder_reward = vec![0.0; n * n_a];

        let stages: Vec<(Vec<f64>, Vec<f64>)> = (0..n_a).map(|a| self.stage(a, lat, k)).collect();
        let rests: Vec<(Vec<f64>, Vec<f64>)> = (0..n_a).map(|a| self.stage(a, rem, k)).collect();
        for s in 0..n {
            for a in 0..n_a {
                latency_kernel.extend_from_slice(&stages[a].0[s * n..(s + 1) * n]);
                latency_reward[s * n_a + a] = stages[a].1[s];
                remainder_kernel.extend_from_slice(&rests[a].0[s * n..(s + 1) * n]);
                remainder_reward[s * n_a + a] = rests[a].1[s];
            }
        }
        let mdp = FiniteConcurrentMdp {
            n_states: n,
            n_actions: n_a,
            latencies: vec![lat / self.period],
            gamma: self.gamma.powf(self.period),
            spillover: SpilloverMode::Fixed,
            reward: self.reward_rate.clone(),
            latency_kernel,
            remainder_kernel,
            latency_reward,
            remainder_reward,
            latency_discount: vec![self.gamma.powf(lat)],
            remainder_discount: vec![self.gamma.powf(rem)],
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Kernel and discounted reward of holding action `a` for `duration`
    /// seconds, split into `k` Simpson sub-steps.
    fn stage(&self, a: usize, duration: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_states;
        if duration == 0.0 {
            return (identity(n), vec![0.0; n]);
        }
        let delta = duration / k as f64;
        let half = expm(&scaled(self.generator(a), delta / 2.0), n);
        let full = matmul(&half, &half, n);
        let r: Vec<f64> = (0..n)
            .map(|s| self.reward_rate[s * self.n_actions + a])
            .collect();

        let g_half = self.gamma.powf(delta / 2.0);
        let g_full = self.gamma.powf(delta);
        let mut reward = vec![0.0; n];
        let mut v = r;
        let mut disc = 1.0;
        for _ in 0..k {
            let v_mid = matvec(&half, &v, n);
            let v_end = matvec(&half, &v_mid, n);
            for s in 0..n {
                reward[s] +=
                    disc * delta / 6.0 * (v[s] + 4.0 * g_half * v_mid[s] + g_full * v_end[s]);
            }
            disc *= g_full;
            v = v_end;
        }
        let mut kernel = identity(n);
        for _ in 0..k {
            kernel = matmul(&kernel, &full, n);
        }
        normalize_rows(&mut kernel, n);
        (kernel, reward)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub max_observed_modulus: f64,
    /// `γ^{t_AS}` with `γ` per second.
    pub bound: f64,
    /// Sup-norm gap between this level's fixed point and the previous level's.
    pub fixed_point_gap: Option<f64>,
    #[serde(skip)]
    pub certificate: CertificateReport,
    #[serde(skip)]
    pub fixed_point: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<LevelReport>,
}

impl RefinementReport {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.levels
            .iter()
            .all(|l| l.max_observed_modulus <= l.bound + tolerance)
    }
}

/// Runs the contraction certificate and value iteration at every refinement
/// level and reports moduli against the continuous-time bound `γ^{t_AS}`.
pub fn fine_discretization_check<R: Rng + ?Sized>(
    base: &ContinuousConcurrentModel,
    levels: &[usize],
    trials: usize,
    rng: &mut R,
) -> Result<RefinementReport> {
    ensure!(!levels.is_empty(), "no refinement levels given");
    ensure!(
        levels.windows(2).all(|w| w[0] < w[1]),
        "refinement levels must be strictly increasing: {levels:?}"
    );
    let bound = base.gamma.powf(base.latency);
    let mut out: Vec<LevelReport> = Vec::with_capacity(levels.len());
    for &k in levels {
        let mdp = base.discretize(k)?;
        let certificate = contraction_certificate(&mdp, trials, rng)?;
        let fixed_point = value_iteration(&mdp, 1_000_000, 1e-13).q.values;
        let fixed_point_gap = out
            .last()
            .map(|prev| sup_gap(&prev.fixed_point, &fixed_point));
        out.push(LevelReport {
            level: k,
            max_observed_modulus: certificate.max_observed_modulus,
            bound,
            fixed_point_gap,
            certificate,
            fixed_point,
        });
    }
    Ok(RefinementReport { levels: out })
}

fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn scaled(m: &[f64], c: f64) -> Vec<f64> {
    m.iter().map(|x| x * c).collect()
}

fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn matvec(m: &[f64], v: &[f64], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j] * v[j]).sum())
        .collect()
}

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
fn expm(m: &[f64], n: usize) -> Vec<f64> {
    let norm = (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let a = scaled(m, 0.5_f64.powi(squarings as i32));
    let mut result = identity(n);
    let mut term = identity(n);
    for order in 1..=20 {
        term = scaled(&matmul(&term, &a, n), 1.0 / order as f64);
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }
    result
}

fn normalize_rows(m: &mut [f64], n: usize) {
    for row in m.chunks_mut(n) {
        for p in row.iter_mut() {
            if *p < 0.0 {
                *p = 0.0;
            }
        }
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::certificate::CONTRACTION_TOLERANCE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expm_of_two_state_generator() {
        // Q = [[-a, a], [b, -b]]: P(t)_00 = b/(a+b) + a/(a+b) e^{-(a+b)t}.
        let (a, b, t) = (0.7, 0.3, 1.3);
        let p = expm(&[-a * t, a * t, b * t, -b * t], 2);
        let expect = b / (a + b) + a / (a + b) * (-(a + b) * t).exp();
        assert!((p[0] - expect).abs() < 1e-13);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-13);
    }

    #[test]
    fn level_one_is_the_plain_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let base = ContinuousConcurrentModel::random(4, 2, 0.5, 0.9, 1.0, 0.3, &mut rng).unwrap();
        let rep =
            fine_discretization_check(&base, &[1], 40, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let direct = contraction_certificate(
            &base.discretize(1).unwrap(),
            40,
            &mut ChaCha8Rng::seed_from_u64(8),
        )
        .unwrap();
        assert_eq!(rep.levels[0].certificate, direct);
    }

    #[test]
    fn moduli_respect_continuous_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let base = ContinuousConcurrentModel::random(4, 2, 0.5, 0.9, 1.0, 0.3, &mut rng).unwrap();
        let rep = fine_discretization_check(&base, &[1, 2, 4, 8], 50, &mut rng).unwrap();
        assert!((rep.levels[0].bound - 0.9_f64.powf(0.3)).abs() < 1e-15);
        assert!(rep.holds(1e-9));
        assert!(rep
            .levels
            .iter()
            .all(|l| l.max_observed_modulus <= 0.9 + CONTRACTION_TOLERANCE));
    }

    #[test]
    fn fixed_points_converge_with_refinement() {
        // Two-state chain: s0 leaks into s1 at rate 0.4, s1 returns at 0.2.
        let base = ContinuousConcurrentModel {
            n_states: 2,
            n_actions: 1,
            generators: vec![-0.4, 0.4, 0.2, -0.2],
            reward_rate: vec![1.0, 0.0],
            gamma: 0.9,
            period: 1.0,
            latency: 0.3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rep = fine_discretization_check(&base, &[1, 2, 4, 8], 10, &mut rng).unwrap();
        let gaps: Vec<f64> = rep
            .levels
            .iter()
            .filter_map(|l| l.fixed_point_gap)
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
        assert!(gaps[2] < 1e-3);
    }

    #[test]
    fn levels_must_increase() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let base = ContinuousConcurrentModel::random(2, 2, 0.5, 0.9, 1.0, 0.3, &mut rng).unwrap();
        assert!(fine_discretization_check(&base, &[2, 2], 1, &mut rng).is_err());
        assert!(fine_discretization_check(&base, &[4, 2], 1, &mut rng).is_err());
    }
}
