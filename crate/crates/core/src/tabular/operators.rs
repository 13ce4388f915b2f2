//! Bellman operators over [`QTable`]s.

use serde::{Deserialize, Serialize};

use super::mdp::{FiniteConcurrentMdp, QTable, SpilloverMode, TabularPolicy};

/// Which operator a backup applies. `Sabotaged` exists so the verification
/// tooling can prove it rejects a broken operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    #[default]
    Concurrent,
    /// Drops the latency-stage discount and doubles the bootstrap.
    Sabotaged,
}

/// Standard Bellman optimality backup on the first latency slot, with the
/// previous action marginalized: `r(s,a) + γ Σ p(s'|s,a) max_a' Q(s',a,a')`.
///
/// The result does not depend on `a_prev` or the latency slot and is
/// broadcast across both.
pub fn blocking_backup(mdp: &FiniteConcurrentMdp, q: &QTable) -> QTable {
    let n_s = mdp.n_states;
    let n_a = mdp.n_actions;
    let mut out = QTable::zeros(mdp);
    for s in 0..n_s {
        for a in 0..n_a {
            let boot = expected_next(mdp.remainder_row(0, s, a), |s2| {
                q.max_over_actions(s2, a, 0)
            });
            let v = mdp.remainder_reward[mdp.stage(0, s, a)] + mdp.remainder_discount[0] * boot;
            for ap in 0..n_a {
                for l in 0..mdp.n_latencies() {
                    out.set(s, ap, a, l, v);
                }
            }
        }
    }
    out
}

/// Concurrent Bellman optimality backup.
pub fn concurrent_backup(mdp: &FiniteConcurrentMdp, q: &QTable) -> QTable {
    backup_with(mdp, q, Operator::Concurrent)
}

pub fn backup_with(mdp: &FiniteConcurrentMdp, q: &QTable, op: Operator) -> QTable {
    let next = next_values(mdp, |s2, a, l| q.max_over_actions(s2, a, l));
    apply_stages(mdp, &next, op)
}

/// Policy-evaluation backup: the bootstrap follows `policy` instead of the
/// greedy maximum.
pub fn evaluation_backup(mdp: &FiniteConcurrentMdp, q: &QTable, policy: &TabularPolicy) -> QTable {
    let next = next_values(mdp, |s2, a, l| q.get(s2, a, policy.act(s2, a, l), l));
    apply_stages(mdp, &next, Operator::Concurrent)
}

/// `V(s', a, l)`: value at the next capture where `a` is now the previous
/// action and `l` the current step's latency slot, averaged over the next
/// step's latency when it is redrawn.
fn next_values(mdp: &FiniteConcurrentMdp, value: impl Fn(usize, usize, usize) -> f64) -> Vec<f64> {
    let n_s = mdp.n_states;
    let n_a = mdp.n_actions;
    let n_l = mdp.n_latencies();
    let mut next = vec![0.0; n_s * n_a * n_l];
    for s2 in 0..n_s {
        for a in 0..n_a {
            let iid = match mdp.spillover {
                SpilloverMode::Fixed => None,
                SpilloverMode::Iid => {
                    Some((0..n_l).map(|l2| value(s2, a, l2)).sum::<f64>() / n_l as f64)
                }
            };
            for l in 0..n_l {
                next[(s2 * n_a + a) * n_l + l] = iid.unwrap_or_else(|| value(s2, a, l));
            }
        }
    }
    next
}

fn apply_stages(mdp: &FiniteConcurrentMdp, next: &[f64], op: Operator) -> QTable {
    let n_s = mdp.n_states;
    let n_a = mdp.n_actions;
    let n_l = mdp.n_latencies();
    let mut out = QTable::zeros(mdp);
    // Value at the switch instant, once `a` has started: W[l][m][a].
    let mut switch = vec![0.0; n_l * n_s * n_a];
    for l in 0..n_l {
        for m in 0..n_s {
            for a in 0..n_a {
                let boot = expected_next(mdp.remainder_row(l, m, a), |s2| {
                    next[(s2 * n_a + a) * n_l + l]
                });
                let boot = match op {
                    Operator::Concurrent => boot,
                    Operator::Sabotaged => 2.0 * boot,
                };
                switch[mdp.stage(l, m, a)] =
                    mdp.remainder_reward[mdp.stage(l, m, a)] + mdp.remainder_discount[l] * boot;
            }
        }
    }
    for l in 0..n_l {
        let lead = match op {
            Operator::Concurrent => mdp.latency_discount[l],
            Operator::Sabotaged => 1.0,
        };
        for s in 0..n_s {
            for ap in 0..n_a {
                let row = mdp.latency_row(l, s, ap);
                let r = mdp.latency_reward[mdp.stage(l, s, ap)];
                for a in 0..n_a {
                    let w = expected_next(row, |m| switch[mdp.stage(l, m, a)]);
                    out.set(s, ap, a, l, r + lead * w);
                }
            }
        }
    }
    out
}

/// `Σ_j p_j f(j)`, skipping zero-probability entries so that a one-hot row
/// reproduces `f` exactly.
#[inline]
fn expected_next(row: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        if p != 0.0 {
            acc += p * f(j);
        }
    }
    acc
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub q: QTable,
    pub sweeps: usize,
    /// Sup-norm change of each sweep.
    pub deltas: Vec<f64>,
    pub converged: bool,
}

/// Iterates `backup` from `q0` until the sup-norm change drops below `tol`.
pub fn iterate(
    q0: QTable,
    max_sweeps: usize,
    tol: f64,
    mut backup: impl FnMut(&QTable) -> QTable,
) -> ValueIteration {
    let mut q = q0;
    let mut deltas = Vec::new();
    for sweep in 0..max_sweeps {
        let next = backup(&q);
        let delta = next.sup_distance(&q);
        q = next;
        deltas.push(delta);
        if delta < tol {
            return ValueIteration {
                q,
                sweeps: sweep + 1,
                deltas,
                converged: true,
            };
        }
    }
    ValueIteration {
        q,
        sweeps: max_sweeps,
        deltas,
        converged: false,
    }
}

pub fn value_iteration(mdp: &FiniteConcurrentMdp, max_sweeps: usize, tol: f64) -> ValueIteration {
    iterate(QTable::zeros(mdp), max_sweeps, tol, |q| {
        concurrent_backup(mdp, q)
    })
}

pub fn policy_evaluation(
    mdp: &FiniteConcurrentMdp,
    policy: &TabularPolicy,
    max_sweeps: usize,
    tol: f64,
) -> ValueIteration {
    iterate(QTable::zeros(mdp), max_sweeps, tol, |q| {
        evaluation_backup(mdp, q, policy)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_state(gamma: f64, ell: f64) -> FiniteConcurrentMdp {
        FiniteConcurrentMdp::new(
            1,
            1,
            vec![ell],
            gamma,
            SpilloverMode::Fixed,
            vec![1.0],
            vec![1.0],
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn geometric_series_fixed_point() {
        let mdp = single_state(0.5, 0.0);
        let vi = iterate(QTable::zeros(&mdp), 10_000, 1e-14, |q| {
            blocking_backup(&mdp, q)
        });
        assert!(vi.converged);
        assert!((vi.q.values[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_table_backs_up_to_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = FiniteConcurrentMdp::random(4, 3, vec![0.0], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        let out = blocking_backup(&mdp, &QTable::zeros(&mdp));
        for s in 0..4 {
            for ap in 0..3 {
                for a in 0..3 {
                    assert_eq!(out.get(s, ap, a, 0), mdp.reward[s * 3 + a]);
                }
            }
        }
    }

    #[test]
    fn bootstrap_weight_is_gamma_to_the_latency() {
        // Zero reward, Q ≡ 1: the backup returns the full-step bootstrap weight
        // and the latency stage alone contributes γ^ℓ.
        let mut mdp = single_state(0.9, 0.5);
        mdp.latency_reward = vec![0.0];
        mdp.remainder_reward = vec![0.0];
        assert!((mdp.latency_discount[0] - 0.948_683_298_050_513_8).abs() < 1e-15);
        let out = concurrent_backup(&mdp, &QTable::filled(&mdp, 1.0));
        assert!((out.values[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn two_state_chain_matches_closed_form() {
        // Latency stage holds the state, remainder stage swaps it. With
        // r(s0) = 1, r(s1) = 0 and a single action:
        //   Q(s1) = γ Q(s0)
        //   Q(s0) = ℓ + γ^ℓ (1 - ℓ) + γ² Q(s0)
        let (gamma, ell) = (0.9_f64, 0.5_f64);
        let mdp = FiniteConcurrentMdp::new(
            2,
            1,
            vec![ell],
            gamma,
            SpilloverMode::Fixed,
            vec![1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let mut q = QTable::zeros(&mdp);
        for _ in 0..1000 {
            q = concurrent_backup(&mdp, &q);
        }
        let q0 = (ell + gamma.powf(ell) * (1.0 - ell)) / (1.0 - gamma * gamma);
        assert!((q.get(0, 0, 0, 0) - q0).abs() < 1e-10);
        assert!((q.get(1, 0, 0, 0) - gamma * q0).abs() < 1e-10);
    }

    #[test]
    fn concurrent_reduces_to_blocking_at_zero_latency() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let mdp =
                FiniteConcurrentMdp::random(6, 4, vec![0.0], 0.95, SpilloverMode::Fixed, &mut rng)
                    .unwrap();
            // A blocking table does not depend on a_prev.
            let mut q = QTable::random(&mdp, -5.0, 5.0, &mut rng);
            for s in 0..6 {
                for a in 0..4 {
                    let v = q.get(s, 0, a, 0);
                    for ap in 1..4 {
                        q.set(s, ap, a, 0, v);
                    }
                }
            }
            assert_eq!(concurrent_backup(&mdp, &q), blocking_backup(&mdp, &q));
        }
    }

    #[test]
    fn monotone_in_q() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mdp =
            FiniteConcurrentMdp::random(5, 3, vec![0.2, 0.7], 0.9, SpilloverMode::Iid, &mut rng)
                .unwrap();
        let q1 = QTable::random(&mdp, -3.0, 3.0, &mut rng);
        let mut q2 = q1.clone();
        for v in &mut q2.values {
            *v += rng.random_range(0.0..2.0);
        }
        let (t1, t2) = (concurrent_backup(&mdp, &q1), concurrent_backup(&mdp, &q2));
        assert!(t1.values.iter().zip(&t2.values).all(|(a, b)| a <= b));
    }

    #[test]
    fn input_table_is_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp = FiniteConcurrentMdp::random(3, 2, vec![0.5], 0.9, SpilloverMode::Fixed, &mut rng)
            .unwrap();
        let q = QTable::random(&mdp, -1.0, 1.0, &mut rng);
        let copy = q.clone();
        let _ = concurrent_backup(&mdp, &q);
        let _ = blocking_backup(&mdp, &q);
        assert_eq!(q, copy);
    }

    use rand::Rng;

    #[test]
    fn value_iteration_error_contracts_each_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp =
            FiniteConcurrentMdp::random(4, 3, vec![0.25, 0.5], 0.9, SpilloverMode::Fixed, &mut rng)
                .unwrap();
        let star = value_iteration(&mdp, 100_000, 1e-14).q;
        let c = (0..2).map(|l| mdp.latency_discount[l]).fold(0.0, f64::max);
        let mut q = QTable::random(&mdp, -10.0, 10.0, &mut rng);
        let mut err = q.sup_distance(&star);
        for _ in 0..50 {
            q = concurrent_backup(&mdp, &q);
            let next = q.sup_distance(&star);
            assert!(next <= c * err + 1e-12, "{next} > {c} * {err}");
            err = next;
        }
    }
}
