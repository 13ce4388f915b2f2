use rand::Rng;

use super::mdp::{FiniteConcurrentMdp, SpilloverMode, TabularPolicy};
use crate::error::{ensure, Result};

/// Largest truncation discount accepted for rollouts.
pub const HORIZON_DISCOUNT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub rollouts: usize,
}

/// Number of steps after which the accumulated discount falls below
/// [`HORIZON_DISCOUNT`] for every latency slot.
pub fn sufficient_horizon(mdp: &FiniteConcurrentMdp) -> usize {
    let worst = (0..mdp.n_latencies())
        .map(|l| mdp.step_discount(l))
        .fold(0.0, f64::max);
    if worst >= 1.0 {
        return usize::MAX;
    }
    (HORIZON_DISCOUNT.ln() / worst.ln()).ceil() as usize + 1
}

/// Monte-Carlo estimate of `Q^π(s, a_prev, a, l)` from `n_rollouts`
/// independent rollouts of `horizon` steps, sampling both stages of every
/// step from the MDP's kernels.
#[allow(clippy::too_many_arguments)]
pub fn mc_q_estimate<R: Rng + ?Sized>(
    mdp: &FiniteConcurrentMdp,
    policy: &TabularPolicy,
    state: usize,
    prev_action: usize,
    action: usize,
    latency: usize,
    n_rollouts: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    ensure!(n_rollouts >= 1, "need at least one rollout");
    ensure!(
        state < mdp.n_states && prev_action < mdp.n_actions && action < mdp.n_actions,
        "state/action index out of range"
    );
    ensure!(
        latency < mdp.n_latencies(),
        "latency slot {latency} out of range"
    );
    let worst = (0..mdp.n_latencies())
        .map(|l| mdp.step_discount(l))
        .fold(0.0, f64::max);
    ensure!(
        worst.powf(horizon as f64) < HORIZON_DISCOUNT,
        "horizon {horizon} leaves discount {} ≥ {HORIZON_DISCOUNT}",
        worst.powf(horizon as f64)
    );

    // Welford accumulation.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for n in 1..=n_rollouts {
        let g = rollout(
            mdp,
            policy,
            state,
            prev_action,
            action,
            latency,
            horizon,
            rng,
        );
        let d = g - mean;
        mean += d / n as f64;
        m2 += d * (g - mean);
    }
    let var = if n_rollouts > 1 {
        m2 / (n_rollouts - 1) as f64
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_error: (var / n_rollouts as f64).sqrt(),
        rollouts: n_rollouts,
    })
}

#[allow(clippy::too_many_arguments)]
fn rollout<R: Rng + ?Sized>(
    mdp: &FiniteConcurrentMdp,
    policy: &TabularPolicy,
    mut s: usize,
    mut ap: usize,
    mut a: usize,
    mut l: usize,
    horizon: usize,
    rng: &mut R,
) -> f64 {
    let mut ret = 0.0;
    let mut disc = 1.0;
    for _ in 0..horizon {
        ret += disc * mdp.latency_reward[mdp.stage(l, s, ap)];
        disc *= mdp.latency_discount[l];
        let m = sample(mdp.latency_row(l, s, ap), rng);
        ret += disc * mdp.remainder_reward[mdp.stage(l, m, a)];
        disc *= mdp.remainder_discount[l];
        s = sample(mdp.remainder_row(l, m, a), rng);
        if mdp.spillover == SpilloverMode::Iid {
            l = rng.random_range(0..mdp.n_latencies());
        }
        ap = a;
        a = policy.act(s, ap, l);
    }
    ret
}

fn sample<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    // Rounding left the cumulative sum just below 1: take the last
    // supported entry.
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}
