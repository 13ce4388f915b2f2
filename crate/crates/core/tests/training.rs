use concurrent_rl::agents::EvalMetrics;
use concurrent_rl::envs::{ExecutionMode, TaskConfig};
use concurrent_rl::harness::{evaluate_net, train_single, Config};

const SEEDS: [u64; 3] = [0, 1, 2];

fn run(cfg: &Config, seed: u64) -> EvalMetrics {
    let out = train_single(cfg, seed).unwrap();
    evaluate_net(cfg, out.policy.net().clone(), seed).unwrap()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn pointmass(gamma: f64, penalty: f64) -> Config {
    let mut cfg = Config::default();
    cfg.task = TaskConfig::Pointmass(Default::default());
    cfg.wrapper.execution_mode = ExecutionMode::Blocking;
    cfg.n_action_bins = Some(5);
    cfg.train.episodes = 1000;
    cfg.train.hidden = vec![32, 32];
    cfg.train.learning_rate = 0.03;
    cfg.train.gamma = gamma;
    cfg.train.timestep_penalty = penalty;
    cfg.evaluate.episodes = 100;
    cfg
}

#[test]
fn blocking_pointmass_reaches_goal() {
    let cfg = pointmass(0.8, 0.0);
    for seed in SEEDS {
        let m = run(&cfg, seed);
        assert!(
            m.success_rate >= 0.95,
            "seed {seed}: success {}",
            m.success_rate
        );
    }
}

#[test]
fn timestep_penalty_shortens_episodes() {
    let plain: Vec<_> = SEEDS
        .iter()
        .map(|&s| run(&pointmass(0.95, 0.0), s))
        .collect();
    let penalized: Vec<_> = SEEDS
        .iter()
        .map(|&s| run(&pointmass(0.95, -0.01), s))
        .collect();
    let len = |m: &[EvalMetrics]| mean(m.iter().map(|e| e.mean_episode_length));
    let succ = |m: &[EvalMetrics]| mean(m.iter().map(|e| e.success_rate));
    assert!(
        len(&penalized) < len(&plain),
        "length {} vs {}",
        len(&penalized),
        len(&plain)
    );
    assert!(
        succ(&penalized) >= succ(&plain) - 0.05,
        "success {} vs {}",
        succ(&penalized),
        succ(&plain)
    );
}

#[test]
fn blocking_pendulum_beats_untrained_policy() {
    let mut cfg = Config::from_toml(include_str!("../../../configs/pendulum.toml")).unwrap();
    cfg.wrapper.execution_mode = ExecutionMode::Blocking;
    let mut untrained = cfg.clone();
    untrained.train.episodes = 1;
    for seed in SEEDS {
        let before = run(&untrained, seed).mean_return;
        let after = run(&cfg, seed).mean_return;
        assert!(after > before + 10.0, "seed {seed}: {after} vs {before}");
    }
}
