//! Run configuration, sweeps, robustness curves, contraction verification
//! and environment benchmarks.

pub mod config;
pub mod contraction;
pub mod curves;
pub mod sweep;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use config::{AgentKind, BenchConfig, Config, EvaluateConfig};
pub use contraction::{
    verify_contraction, ContractionConfig, ContractionReport, ModulusRow, RefinementConfig,
};
pub use curves::{
    feature_arm, normalized_auc, sorted_robustness_curve, write_curves, ArmCurve, CurvePoint,
};
pub use sweep::{
    env_seed, read_records, records_to_csv, run_sweep, run_trial, write_records, Cell,
    ScheduleKind, Status, SweepOptions, SweepRecord, SweepSpec, SweepSummary, CSV_HEADER,
};

use crate::agents::{
    cem_ql_train, dqn_train, evaluate, ActionGrid, EvalMetrics, Mlp, QPolicy, TrainConfig,
    TrainOutcome,
};
use crate::envs::{action_completion, ConcurrentEnv};
use crate::error::{ensure, Result};
use crate::features::FeatureBuilder;

pub fn make_env(config: &Config, seed: u64) -> Result<ConcurrentEnv> {
    ConcurrentEnv::new(config.task.build(), config.wrapper.clone(), env_seed(seed))
}

/// Trains one agent exactly as configured; `seed` replaces `train.seed`.
pub fn train_single(config: &Config, seed: u64) -> Result<TrainOutcome> {
    let mut env = make_env(config, seed)?;
    let train = TrainConfig {
        seed,
        ..config.train.clone()
    };
    match config.agent {
        AgentKind::Dqn => dqn_train(&mut env, config.features, config.bins(), &train),
        AgentKind::CemQl => cem_ql_train(&mut env, config.features, &train, &config.cem),
    }
}

/// Wraps a loaded network in the policy type the config's agent uses.
pub fn policy_for(config: &Config, env: &ConcurrentEnv, net: Mlp) -> Result<QPolicy> {
    let (low, high) = env.task().action_bounds();
    let feature_dim = FeatureBuilder::for_env(config.features, env)?.dim();
    let policy = match config.agent {
        AgentKind::Dqn => QPolicy::Discrete {
            grid: ActionGrid::new(low, high, config.bins())?,
            net,
        },
        AgentKind::CemQl => QPolicy::Continuous {
            net,
            cem: config.cem,
            low,
            high,
        },
    };
    let (inputs, outputs) = match &policy {
        QPolicy::Discrete { grid, .. } => (feature_dim, grid.len()),
        QPolicy::Continuous { low, .. } => (feature_dim + low.len(), 1),
    };
    ensure!(
        policy.net().input_dim() == inputs && policy.net().output_dim() == outputs,
        "network shape {:?} does not fit {inputs} inputs and {outputs} outputs",
        policy.net().sizes()
    );
    Ok(policy)
}

/// Greedy evaluation of `net` for `config.evaluate.episodes` episodes.
pub fn evaluate_net(config: &Config, net: Mlp, seed: u64) -> Result<EvalMetrics> {
    let mut env = make_env(config, seed)?;
    let policy = policy_for(config, &env, net)?;
    evaluate(
        &mut env,
        config.features,
        &policy,
        config.evaluate.episodes,
        seed,
    )
}

/// Random-policy rollouts of the configured environment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub task: String,
    pub execution_mode: String,
    pub episodes: usize,
    pub steps: usize,
    pub mean_return: f64,
    pub episode_sim_duration_s: f64,
    pub action_completion: f64,
    pub steps_per_second: f64,
}

pub fn bench_env(config: &Config, seed: u64) -> Result<BenchReport> {
    let episodes = config.bench.episodes;
    ensure!(episodes >= 1, "bench needs at least one episode");
    let mut env = make_env(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (low, high) = env.task().action_bounds();
    let start = Instant::now();
    let (mut steps, mut ret, mut dur, mut comp) = (0, 0.0, 0.0, 0.0);
    for _ in 0..episodes {
        env.reset();
        let mut history = Vec::new();
        while !env.is_done() {
            let a: Vec<f64> = low
                .iter()
                .zip(&high)
                .map(|(l, h)| rng.random_range(*l..=*h))
                .collect();
            let t = env.step(&a)?;
            ret += t.reward;
            dur += t.sim_duration;
            history.push(t);
        }
        steps += history.len();
        comp += action_completion(&history)?;
    }
    let n = episodes as f64;
    Ok(BenchReport {
        task: env.task().name().to_string(),
        execution_mode: env.config().execution_mode.as_str().to_string(),
        episodes,
        steps,
        mean_return: ret / n,
        episode_sim_duration_s: dur / n,
        action_completion: comp / n,
        steps_per_second: steps as f64 / start.elapsed().as_secs_f64().max(1e-9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::ExecutionMode;

    #[test]
    fn bench_reports_durations() {
        let mut cfg = Config::default();
        cfg.bench.episodes = 2;
        let rep = bench_env(&cfg, 0).unwrap();
        assert_eq!(rep.steps, 200);
        assert!((rep.episode_sim_duration_s - 10.0).abs() < 1e-9);
        cfg.wrapper.execution_mode = ExecutionMode::Blocking;
        assert_eq!(bench_env(&cfg, 0).unwrap().execution_mode, "blocking");
    }
}
