use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// How the latency of the step after the next capture is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpilloverMode {
    /// The next step keeps the current latency.
    #[default]
    Fixed,
    /// The next step's latency is drawn uniformly from the latency set.
    Iid,
}

/// Finite concurrent MDP with a two-stage transition per sampling period.
///
/// A step from state `s` with previous action `a_prev`, new action `a` and
/// latency slot `l` runs in two stages:
///
/// 1. the latency stage keeps executing `a_prev`: reward
///    `latency_reward[l][s][a_prev]`, then `s -> m` under the latency kernel,
///    then discount `latency_discount[l]`;
/// 2. the remainder stage executes `a`: reward `remainder_reward[l][m][a]`,
///    then `m -> s'` under the remainder kernel, then discount
///    `remainder_discount[l]`.
///
/// For a plain tabular instance with per-period discount `gamma` and latency
/// fraction `ℓ`, the stage rewards are `ℓ·r` and `(1-ℓ)·r` and the stage
/// discounts are `gamma^ℓ` and `gamma^(1-ℓ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteConcurrentMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub latencies: Vec<f64>,
    pub gamma: f64,
    pub spillover: SpilloverMode,
    /// Reward rate `r(s, a)` while `a` executes in `s`.
    pub reward: Vec<f64>,
    pub latency_kernel: Vec<f64>,
    pub remainder_kernel: Vec<f64>,
    pub latency_reward: Vec<f64>,
    pub remainder_reward: Vec<f64>,
    pub latency_discount: Vec<f64>,
    pub remainder_discount: Vec<f64>,
}

impl FiniteConcurrentMdp {
    /// Builds an instance from a reward-rate table and the two kernels, both
    /// laid out `[l][s][a][s']`.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        latencies: Vec<f64>,
        gamma: f64,
        spillover: SpilloverMode,
        reward: Vec<f64>,
        latency_kernel: Vec<f64>,
        remainder_kernel: Vec<f64>,
    ) -> Result<Self> {
        ensure!(gamma > 0.0 && gamma <= 1.0, "gamma {gamma} outside (0, 1]");
        ensure!(
            reward.len() == n_states * n_actions,
            "reward table has {} entries, expected {}",
            reward.len(),
            n_states * n_actions
        );
        let n_l = latencies.len();
        let mut latency_reward = Vec::with_capacity(n_l * n_states * n_actions);
        let mut remainder_reward = Vec::with_capacity(n_l * n_states * n_actions);
        for &ell in &latencies {
            latency_reward.extend(reward.iter().map(|r| ell * r));
            remainder_reward.extend(reward.iter().map(|r| (1.0 - ell) * r));
        }
        let mdp = FiniteConcurrentMdp {
            n_states,
            n_actions,
            latency_discount: latencies.iter().map(|ell| gamma.powf(*ell)).collect(),
            remainder_discount: latencies.iter().map(|ell| gamma.powf(1.0 - ell)).collect(),
            latencies,
            gamma,
            spillover,
            reward,
            latency_kernel,
            remainder_kernel,
            latency_reward,
            remainder_reward,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Random instance: Dirichlet(1, …, 1) kernel rows and rewards uniform in
    /// `[0, 1]`. The latency kernel is the identity in any `ℓ = 0` slot.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        latencies: Vec<f64>,
        gamma: f64,
        spillover: SpilloverMode,
        rng: &mut R,
    ) -> Result<Self> {
        let reward: Vec<f64> = (0..n_states * n_actions).map(|_| rng.random()).collect();
        let rows = n_states * n_actions;
        let mut latency_kernel = Vec::with_capacity(latencies.len() * rows * n_states);
        let mut remainder_kernel = Vec::with_capacity(latencies.len() * rows * n_states);
        for &ell in &latencies {
            for s in 0..n_states {
                for _ in 0..n_actions {
                    if ell == 0.0 {
                        latency_kernel
                            .extend((0..n_states).map(|j| if j == s { 1.0 } else { 0.0 }));
                    } else {
                        latency_kernel.extend(dirichlet_row(n_states, rng));
                    }
                }
            }
            for _ in 0..rows {
                remainder_kernel.extend(dirichlet_row(n_states, rng));
            }
        }
        Self::new(
            n_states,
            n_actions,
            latencies,
            gamma,
            spillover,
            reward,
            latency_kernel,
            remainder_kernel,
        )
    }

    pub fn n_latencies(&self) -> usize {
        self.latencies.len()
    }

    /// Kernel row offset for `[l][s][a]`.
    #[inline]
    pub(crate) fn row(&self, l: usize, s: usize, a: usize) -> usize {
        ((l * self.n_states + s) * self.n_actions + a) * self.n_states
    }

    /// Index into the stage reward tables for `[l][s][a]`.
    #[inline]
    pub(crate) fn stage(&self, l: usize, s: usize, a: usize) -> usize {
        (l * self.n_states + s) * self.n_actions + a
    }

    pub fn latency_row(&self, l: usize, s: usize, a_prev: usize) -> &[f64] {
        let o = self.row(l, s, a_prev);
        &self.latency_kernel[o..o + self.n_states]
    }

    pub fn remainder_row(&self, l: usize, s: usize, a: usize) -> &[f64] {
        let o = self.row(l, s, a);
        &self.remainder_kernel[o..o + self.n_states]
    }

    /// Effective discount applied to the bootstrap over one full step.
    pub fn step_discount(&self, l: usize) -> f64 {
        self.latency_discount[l] * self.remainder_discount[l]
    }

    pub fn validate(&self) -> Result<()> {
        let n_l = self.latencies.len();
        ensure!(n_l > 0, "latency set is empty");
        ensure!(
            self.n_states > 0 && self.n_actions > 0,
            "empty state or action set"
        );
        for &ell in &self.latencies {
            ensure!(
                (0.0..1.0).contains(&ell),
                "latency fraction {ell} outside [0, 1)"
            );
        }
        let kernel_len = n_l * self.n_states * self.n_actions * self.n_states;
        let stage_len = n_l * self.n_states * self.n_actions;
        ensure!(
            self.latency_kernel.len() == kernel_len && self.remainder_kernel.len() == kernel_len,
            "kernel tensors must have {kernel_len} entries"
        );
        ensure!(
            self.latency_reward.len() == stage_len
                && self.remainder_reward.len() == stage_len
                && self.latency_discount.len() == n_l
                && self.remainder_discount.len() == n_l,
            "stage tables do not match the latency set"
        );
        for kernel in [&self.latency_kernel, &self.remainder_kernel] {
            for row in kernel.chunks(self.n_states) {
                ensure!(
                    row.iter().all(|p| *p >= 0.0),
                    "negative transition probability"
                );
                let total: f64 = row.iter().sum();
                ensure!((total - 1.0).abs() <= 1e-12, "kernel row sums to {total}");
            }
        }
        for (l, &ell) in self.latencies.iter().enumerate() {
            if ell == 0.0 {
                for s in 0..self.n_states {
                    for a in 0..self.n_actions {
                        let row = self.latency_row(l, s, a);
                        ensure!(
                            row.iter()
                                .enumerate()
                                .all(|(j, p)| *p == if j == s { 1.0 } else { 0.0 }),
                            "latency kernel must be the identity when ℓ = 0"
                        );
                    }
                }
            }
        }
        for d in self.latency_discount.iter().chain(&self.remainder_discount) {
            ensure!(*d > 0.0 && *d <= 1.0, "stage discount {d} outside (0, 1]");
        }
        Ok(())
    }
}

pub(crate) fn dirichlet_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut row: Vec<f64> = draws.into_iter().map(|x| x / total).collect();
    // Pin the row sum to 1 within rounding.
    let drift: f64 = 1.0 - row.iter().sum::<f64>();
    if let Some(max) = row.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += drift;
    }
    row
}

/// Action values indexed by `(state, prev_action, action, latency slot)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_latencies: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn zeros(mdp: &FiniteConcurrentMdp) -> Self {
        Self::filled(mdp, 0.0)
    }

    pub fn filled(mdp: &FiniteConcurrentMdp, v: f64) -> Self {
        QTable {
            n_states: mdp.n_states,
            n_actions: mdp.n_actions,
            n_latencies: mdp.n_latencies(),
            values: vec![v; mdp.n_states * mdp.n_actions * mdp.n_actions * mdp.n_latencies()],
        }
    }

    pub fn random<R: Rng + ?Sized>(
        mdp: &FiniteConcurrentMdp,
        lo: f64,
        hi: f64,
        rng: &mut R,
    ) -> Self {
        let mut q = Self::zeros(mdp);
        for v in &mut q.values {
            *v = rng.random_range(lo..hi);
        }
        q
    }

    #[inline]
    pub fn index(&self, s: usize, a_prev: usize, a: usize, l: usize) -> usize {
        ((s * self.n_actions + a_prev) * self.n_actions + a) * self.n_latencies + l
    }

    #[inline]
    pub fn get(&self, s: usize, a_prev: usize, a: usize, l: usize) -> f64 {
        self.values[self.index(s, a_prev, a, l)]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a_prev: usize, a: usize, l: usize, v: f64) {
        let i = self.index(s, a_prev, a, l);
        self.values[i] = v;
    }

    pub fn max_over_actions(&self, s: usize, a_prev: usize, l: usize) -> f64 {
        (0..self.n_actions)
            .map(|a| self.get(s, a_prev, a, l))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest-index maximizing action.
    pub fn argmax(&self, s: usize, a_prev: usize, l: usize) -> usize {
        let mut best = 0;
        for a in 1..self.n_actions {
            if self.get(s, a_prev, a, l) > self.get(s, a_prev, best, l) {
                best = a;
            }
        }
        best
    }

    pub fn sup_distance(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Deterministic policy `a = π(s, a_prev, l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TabularPolicy {
    pub n_actions: usize,
    pub n_latencies: usize,
    pub actions: Vec<usize>,
}

impl TabularPolicy {
    pub fn greedy(q: &QTable) -> Self {
        let mut actions = Vec::with_capacity(q.n_states * q.n_actions * q.n_latencies);
        for s in 0..q.n_states {
            for ap in 0..q.n_actions {
                for l in 0..q.n_latencies {
                    actions.push(q.argmax(s, ap, l));
                }
            }
        }
        TabularPolicy {
            n_actions: q.n_actions,
            n_latencies: q.n_latencies,
            actions,
        }
    }

    #[inline]
    pub fn act(&self, s: usize, a_prev: usize, l: usize) -> usize {
        self.actions[(s * self.n_actions + a_prev) * self.n_latencies + l]
    }
}
