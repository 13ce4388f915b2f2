use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cem::{cem_argmax, CemConfig};
use super::grid::ActionGrid;
use super::mlp::Mlp;
use super::replay::ReplayBuffer;
use crate::envs::{action_completion, ConcurrentEnv};
use crate::error::{ensure, Error, Result};
use crate::features::{FeatureBuilder, FeatureConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountMode {
    /// `γ` per environment step.
    #[default]
    PerStep,
    /// `γ^(elapsed / H)`, with the elapsed physics time of the step split as
    /// `t_AS` plus the remainder.
    LatencyDiscount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub gamma: f64,
    /// Environment steps between target-network syncs.
    pub target_update_period: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of episodes over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    /// Added to every reward during training, e.g. `-0.01`.
    pub timestep_penalty: f64,
    pub episodes: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub train_every: usize,
    pub grad_clip: f64,
    pub discount_mode: DiscountMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            gamma: 0.99,
            target_update_period: 500,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.3,
            timestep_penalty: 0.0,
            episodes: 500,
            seed: 0,
            hidden: vec![64, 64],
            replay_capacity: 50_000,
            warmup: 500,
            train_every: 1,
            grad_clip: 10.0,
            discount_mode: DiscountMode::PerStep,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.gamma >= 0.0 && self.gamma <= 1.0,
            "gamma {} outside [0, 1]",
            self.gamma
        );
        for e in [self.epsilon_start, self.epsilon_end] {
            ensure!((0.0..=1.0).contains(&e), "epsilon {e} outside [0, 1]");
        }
        ensure!(
            (0.0..=1.0).contains(&self.epsilon_decay_fraction),
            "epsilon decay fraction outside [0, 1]"
        );
        ensure!(self.learning_rate > 0.0, "learning rate must be positive");
        ensure!(self.batch_size >= 1, "batch size must be positive");
        ensure!(self.episodes >= 1, "need at least one episode");
        ensure!(
            self.target_update_period >= 1,
            "target update period must be positive"
        );
        ensure!(self.train_every >= 1, "train_every must be positive");
        ensure!(self.grad_clip > 0.0, "gradient clip must be positive");
        Ok(())
    }

    /// ε for episode `ep`: linear from start to end over the decay window.
    pub fn epsilon(&self, ep: usize) -> f64 {
        let window = (self.epsilon_decay_fraction * self.episodes as f64).max(1.0);
        let f = (ep as f64 / window).min(1.0);
        self.epsilon_start + f * (self.epsilon_end - self.epsilon_start)
    }
}

/// One stored learning tuple, with features already assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub features: Vec<f64>,
    pub action: Vec<f64>,
    /// Grid index for discrete agents.
    pub action_index: usize,
    pub reward: f64,
    pub next_features: Vec<f64>,
    pub terminal: bool,
    pub discount: f64,
}

/// Greedy policy backed by a Q-network.
#[derive(Debug, Clone)]
pub enum QPolicy {
    /// One output per grid action.
    Discrete { net: Mlp, grid: ActionGrid },
    /// Single output on `[features, action]`, maximized by CEM.
    Continuous {
        net: Mlp,
        cem: CemConfig,
        low: Vec<f64>,
        high: Vec<f64>,
    },
}

impl QPolicy {
    pub fn net(&self) -> &Mlp {
        match self {
            QPolicy::Discrete { net, .. } | QPolicy::Continuous { net, .. } => net,
        }
    }

    /// Greedy action and its grid index (zero for continuous policies).
    pub fn act<R: Rng + ?Sized>(&self, features: &[f64], rng: &mut R) -> Result<(Vec<f64>, usize)> {
        match self {
            QPolicy::Discrete { net, grid } => {
                let i = argmax(&net.forward(features)?);
                Ok((grid.action(i), i))
            }
            QPolicy::Continuous {
                net,
                cem,
                low,
                high,
            } => Ok((cem_argmax(net, features, low, high, cem, rng)?.action, 0)),
        }
    }

    fn random_action<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        match self {
            QPolicy::Discrete { grid, .. } => {
                let i = rng.random_range(0..grid.len());
                (grid.action(i), i)
            }
            QPolicy::Continuous { low, high, .. } => (
                low.iter()
                    .zip(high)
                    .map(|(l, h)| rng.random_range(*l..=*h))
                    .collect(),
                0,
            ),
        }
    }

    fn net_mut(&mut self) -> &mut Mlp {
        match self {
            QPolicy::Discrete { net, .. } | QPolicy::Continuous { net, .. } => net,
        }
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeStats {
    /// Undiscounted task reward, without the timestep penalty.
    pub episode_return: f64,
    pub steps: usize,
    pub sim_duration: f64,
    pub action_completion: f64,
    /// Whether the episode ended in a terminal state.
    pub terminated: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: QPolicy,
    pub episodes: Vec<EpisodeStats>,
    pub updates: usize,
}

impl TrainOutcome {
    pub fn returns(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.episode_return).collect()
    }

    /// Mean return over the final 10% of episodes (at least one).
    pub fn final_return(&self) -> f64 {
        tail_mean(&self.returns(), 0.1)
    }

    pub fn final_sim_duration(&self) -> f64 {
        let xs: Vec<f64> = self.episodes.iter().map(|e| e.sim_duration).collect();
        tail_mean(&xs, 0.1)
    }

    pub fn final_action_completion(&self) -> f64 {
        let xs: Vec<f64> = self.episodes.iter().map(|e| e.action_completion).collect();
        tail_mean(&xs, 0.1)
    }
}

pub fn tail_mean(xs: &[f64], fraction: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let n = ((xs.len() as f64 * fraction).ceil() as usize).clamp(1, xs.len());
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}

/// ε-greedy DQN over a uniform action grid with `n_bins` points per action
/// dimension.
pub fn dqn_train(
    env: &mut ConcurrentEnv,
    features: FeatureConfig,
    n_bins: usize,
    train: &TrainConfig,
) -> Result<TrainOutcome> {
    train.validate()?;
    let (low, high) = env.task().action_bounds();
    let grid = ActionGrid::new(low, high, n_bins)?;
    let builder = FeatureBuilder::for_env(features, env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut sizes = vec![builder.dim()];
    sizes.extend(&train.hidden);
    sizes.push(grid.len());
    let net = Mlp::new(&sizes, &mut rng)?;
    run(
        env,
        builder,
        QPolicy::Discrete { net, grid },
        train,
        &mut rng,
    )
}

/// Continuous-action Q-learning with CEM as the argmax, on a single process.
pub fn cem_ql_train(
    env: &mut ConcurrentEnv,
    features: FeatureConfig,
    train: &TrainConfig,
    cem: &CemConfig,
) -> Result<TrainOutcome> {
    train.validate()?;
    cem.validate()?;
    let (low, high) = env.task().action_bounds();
    let builder = FeatureBuilder::for_env(features, env)?;
    let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
    let mut sizes = vec![builder.dim() + low.len()];
    sizes.extend(&train.hidden);
    sizes.push(1);
    let net = Mlp::new(&sizes, &mut rng)?;
    let policy = QPolicy::Continuous {
        net,
        cem: *cem,
        low,
        high,
    };
    run(env, builder, policy, train, &mut rng)
}

fn run(
    env: &mut ConcurrentEnv,
    mut builder: FeatureBuilder,
    mut policy: QPolicy,
    train: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    let mut target = policy.net().clone();
    let mut buffer = ReplayBuffer::new(train.replay_capacity)?;
    let mut episodes = Vec::with_capacity(train.episodes);
    let mut grad = vec![0.0; policy.net().n_params()];
    let mut total_steps = 0usize;
    let mut updates = 0usize;
    let h = env.config().sampling_period;

    for ep in 0..train.episodes {
        let eps = train.epsilon(ep);
        env.reset();
        builder.reset();
        let mut obs = builder.observe(env)?;
        let mut history = Vec::with_capacity(env.horizon());
        let mut ret = 0.0;
        let mut terminated = false;
        while !env.is_done() {
            let (action, index) = if rng.random::<f64>() < eps {
                policy.random_action(rng)
            } else {
                policy.act(&obs, rng)?
            };
            let tr = env.step(&action)?;
            builder.push(&tr.state, &action);
            let next = builder.observe(env)?;
            let elapsed = match env.config().execution_mode {
                crate::envs::ExecutionMode::Concurrent => h,
                crate::envs::ExecutionMode::Blocking => h + env.config().action_execution_extra,
            };
            let discount = match train.discount_mode {
                DiscountMode::PerStep => train.gamma,
                DiscountMode::LatencyDiscount => {
                    let lat = tr.latency_fraction;
                    train.gamma.powf(lat) * train.gamma.powf(elapsed / h - lat)
                }
            };
            ret += tr.reward;
            terminated |= tr.terminal;
            buffer.push(Experience {
                features: std::mem::replace(&mut obs, next.clone()),
                action,
                action_index: index,
                reward: tr.reward + train.timestep_penalty,
                next_features: next,
                terminal: tr.terminal,
                discount,
            });
            history.push(tr);
            total_steps += 1;

            if buffer.len() >= train.warmup.max(1) && total_steps.is_multiple_of(train.train_every) {
                let loss = update(&mut policy, &target, &buffer, train, &mut grad, rng)?;
                if !loss.is_finite() || !policy.net().is_finite() {
                    return Err(Error::divergence(format!(
                        "non-finite loss {loss} at episode {ep}, step {}",
                        env.steps()
                    )));
                }
                updates += 1;
            }
            if total_steps.is_multiple_of(train.target_update_period) {
                target = policy.net().clone();
            }
        }
        episodes.push(EpisodeStats {
            episode_return: ret,
            steps: history.len(),
            sim_duration: env.episode_sim_time(),
            action_completion: action_completion(&history)?,
            terminated,
        });
        log::debug!("episode {ep}: return {ret:.3}, eps {eps:.3}");
    }
    Ok(TrainOutcome {
        policy,
        episodes,
        updates,
    })
}

/// TD target `r + d · max_a' Q̂(s', a')`, or `r` for terminal transitions.
pub fn td_target<R: Rng + ?Sized>(
    policy: &QPolicy,
    target: &Mlp,
    exp: &Experience,
    rng: &mut R,
) -> Result<f64> {
    if exp.terminal || exp.discount == 0.0 {
        return Ok(exp.reward);
    }
    let bootstrap = match policy {
        QPolicy::Discrete { .. } => target
            .forward(&exp.next_features)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max),
        QPolicy::Continuous { cem, low, high, .. } => {
            cem_argmax(target, &exp.next_features, low, high, cem, rng)?.value
        }
    };
    Ok(exp.reward + exp.discount * bootstrap)
}

fn update(
    policy: &mut QPolicy,
    target: &Mlp,
    buffer: &ReplayBuffer<Experience>,
    train: &TrainConfig,
    grad: &mut [f64],
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let batch = buffer.sample(train.batch_size, rng)?;
    let mut loss = 0.0;
    for exp in &batch {
        let y = td_target(policy, target, exp, rng)?;
        let net = policy.net();
        let err = match policy {
            QPolicy::Discrete { .. } => {
                net.td_gradient(&exp.features, exp.action_index, y, grad)?
            }
            QPolicy::Continuous { .. } => {
                let mut x = exp.features.clone();
                x.extend_from_slice(&exp.action);
                net.td_gradient(&x, 0, y, grad)?
            }
        };
        loss += err * err;
    }
    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    policy
        .net_mut()
        .sgd_step(grad, train.learning_rate, Some(train.grad_clip))?;
    Ok(loss / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub episodes: usize,
    pub mean_return: f64,
    pub episode_sim_duration_s: f64,
    pub action_completion: f64,
    pub success_rate: f64,
    pub mean_episode_length: f64,
}

/// Runs `episodes` greedy episodes. `seed` drives CEM sampling only; the
/// environment carries its own RNG.
pub fn evaluate(
    env: &mut ConcurrentEnv,
    features: FeatureConfig,
    policy: &QPolicy,
    episodes: usize,
    seed: u64,
) -> Result<EvalMetrics> {
    ensure!(episodes >= 1, "evaluation needs at least one episode");
    let mut builder = FeatureBuilder::for_env(features, env)?;
    let expected = match policy {
        QPolicy::Discrete { .. } => builder.dim(),
        QPolicy::Continuous { low, .. } => builder.dim() + low.len(),
    };
    ensure!(
        policy.net().input_dim() == expected,
        "network input {} does not match feature layout {expected}",
        policy.net().input_dim()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ret, mut dur, mut comp, mut succ, mut len) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..episodes {
        env.reset();
        builder.reset();
        let mut history = Vec::new();
        while !env.is_done() {
            let obs = builder.observe(env)?;
            let (action, _) = policy.act(&obs, &mut rng)?;
            let tr = env.step(&action)?;
            builder.push(&tr.state, &action);
            ret += tr.reward;
            if tr.terminal {
                succ += 1.0;
            }
            history.push(tr);
        }
        dur += env.episode_sim_time();
        comp += action_completion(&history)?;
        len += history.len() as f64;
    }
    let n = episodes as f64;
    Ok(EvalMetrics {
        episodes,
        mean_return: ret / n,
        episode_sim_duration_s: dur / n,
        action_completion: comp / n,
        success_rate: succ / n,
        mean_episode_length: len / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{LatencySchedule, Pendulum, PendulumParams, WrapperConfig};

    fn pendulum(seed: u64) -> ConcurrentEnv {
        let cfg = WrapperConfig {
            horizon: Some(20),
            latency_schedule: LatencySchedule::Fixed { latency: 0.05 },
            ..Default::default()
        };
        ConcurrentEnv::new(
            Box::new(Pendulum::new(PendulumParams::default())),
            cfg,
            seed,
        )
        .unwrap()
    }

    fn small() -> TrainConfig {
        TrainConfig {
            episodes: 6,
            hidden: vec![8],
            warmup: 10,
            target_update_period: 7,
            ..Default::default()
        }
    }

    #[test]
    fn epsilon_schedule() {
        let t = TrainConfig {
            episodes: 100,
            ..Default::default()
        };
        assert_eq!(t.epsilon(0), 1.0);
        assert!((t.epsilon(15) - 0.525).abs() < 1e-12);
        assert!((t.epsilon(30) - 0.05).abs() < 1e-12);
        assert!((t.epsilon(99) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn training_is_reproducible() {
        let a = dqn_train(&mut pendulum(1), FeatureConfig::default(), 5, &small()).unwrap();
        let b = dqn_train(&mut pendulum(1), FeatureConfig::default(), 5, &small()).unwrap();
        assert_eq!(a.returns(), b.returns());
        assert_eq!(a.policy.net(), b.policy.net());
        assert!(a.updates > 0);
    }

    #[test]
    fn terminal_target_is_reward() {
        let net = Mlp::new(&[2, 4, 3], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let grid = ActionGrid::new(vec![-1.0], vec![1.0], 3).unwrap();
        let policy = QPolicy::Discrete {
            net: net.clone(),
            grid,
        };
        let exp = Experience {
            features: vec![0.1, 0.2],
            action: vec![0.0],
            action_index: 1,
            reward: 0.37,
            next_features: vec![5.0, -3.0],
            terminal: true,
            discount: 0.99,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(td_target(&policy, &net, &exp, &mut rng).unwrap(), 0.37);
        let open = Experience {
            terminal: false,
            ..exp
        };
        let q = net.forward(&[5.0, -3.0]).unwrap();
        let expected = 0.37 + 0.99 * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(td_target(&policy, &net, &open, &mut rng).unwrap(), expected);
    }

    #[test]
    fn evaluation_rejects_mismatched_network() {
        let mut env = pendulum(0);
        let policy = QPolicy::Discrete {
            net: Mlp::zeros(&[5, 3]).unwrap(),
            grid: ActionGrid::new(vec![-2.0], vec![2.0], 3).unwrap(),
        };
        assert!(evaluate(&mut env, FeatureConfig::default(), &policy, 1, 0).is_err());
    }

    #[test]
    fn tail_mean_uses_last_tenth() {
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(tail_mean(&xs, 0.1), 19.5);
        assert_eq!(tail_mean(&[4.0], 0.1), 4.0);
    }
}
