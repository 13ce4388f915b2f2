//! WebAssembly bindings for the static demo page in `www/`. Every export
//! returns a JSON string; errors come back as `{"error": "..."}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use concurrent_rl::envs::{
    action_completion, wrap_angle, ConcurrentEnv, ExecutionMode, LatencySchedule, Pendulum,
    PendulumParams, Pointmass, PointmassParams, WrapperConfig,
};
use concurrent_rl::features::compute_vtg;
use concurrent_rl::sim::ActionTrajectory;
use concurrent_rl::tabular::{certificate_with, FiniteConcurrentMdp, Operator, SpilloverMode};
use concurrent_rl::Result;

fn respond<T: Serialize>(r: Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn wrapper(mode: ExecutionMode, latency_s: f64) -> WrapperConfig {
    WrapperConfig {
        execution_mode: mode,
        latency_schedule: LatencySchedule::Fixed { latency: latency_s },
        ..WrapperConfig::default()
    }
}

#[derive(Serialize)]
struct RampStep {
    command: Vec<f64>,
    /// Position when the command was issued and at the next capture.
    from: Vec<f64>,
    to: Vec<f64>,
    executed: Vec<f64>,
    /// Vector-to-go left at the capture that ends this step.
    vtg: Vec<f64>,
}

#[derive(Serialize)]
struct RampDemo {
    mode: &'static str,
    latency_ms: f64,
    steps: Vec<RampStep>,
    action_completion: f64,
    sim_duration_s: f64,
}

/// Issues two pointmass displacement commands from `(0.2, 0.2)` and reports
/// where each one actually got to by the next capture.
#[wasm_bindgen]
pub fn pointmass_ramps(
    latency_ms: f64,
    concurrent: bool,
    ax: f64,
    ay: f64,
    bx: f64,
    by: f64,
) -> String {
    respond(pointmass_ramps_impl(
        latency_ms,
        concurrent,
        [[ax, ay], [bx, by]],
    ))
}

fn pointmass_ramps_impl(
    latency_ms: f64,
    concurrent: bool,
    commands: [[f64; 2]; 2],
) -> Result<RampDemo> {
    let mode = if concurrent {
        ExecutionMode::Concurrent
    } else {
        ExecutionMode::Blocking
    };
    let task = Pointmass::new(PointmassParams {
        goal: [0.9, 0.9],
        goal_radius: 0.01,
        ..PointmassParams::default()
    });
    let mut env = ConcurrentEnv::new(Box::new(task), wrapper(mode, latency_ms / 1000.0), 0)?;
    env.reset();
    let start = vec![0.2, 0.2];
    env.set_state(start.clone(), ActionTrajectory::hold(start, 0.0), 0.0)?;
    let mut steps = Vec::new();
    let mut history = Vec::new();
    for cmd in commands {
        let from = env.state().to_vec();
        let tr = env.step(&cmd)?;
        let vtg = compute_vtg(env.pending_trajectory(), env.now())?;
        steps.push(RampStep {
            command: cmd.to_vec(),
            from,
            to: tr.next_state.clone(),
            executed: tr.executed.clone(),
            vtg,
        });
        history.push(tr);
    }
    Ok(RampDemo {
        mode: mode.as_str(),
        latency_ms,
        action_completion: action_completion(&history)?,
        sim_duration_s: history.iter().map(|t| t.sim_duration).sum(),
        steps,
    })
}

#[derive(Serialize)]
struct Rollout {
    mode: &'static str,
    time: Vec<f64>,
    theta: Vec<f64>,
    episode_return: f64,
    sim_duration_s: f64,
    action_completion: f64,
}

#[derive(Serialize)]
struct RolloutPair {
    latency_ms: f64,
    blocking: Rollout,
    concurrent: Rollout,
}

/// Runs a hand-written swing-up controller on the pendulum in both execution
/// modes with the same latency.
#[wasm_bindgen]
pub fn pendulum_rollouts(latency_ms: f64, steps: u32) -> String {
    respond((|| {
        Ok(RolloutPair {
            latency_ms,
            blocking: pendulum_rollout(
                ExecutionMode::Blocking,
                latency_ms / 1000.0,
                steps as usize,
            )?,
            concurrent: pendulum_rollout(
                ExecutionMode::Concurrent,
                latency_ms / 1000.0,
                steps as usize,
            )?,
        })
    })())
}

fn swing_up(theta: f64, omega: f64, limit: f64) -> f64 {
    let th = wrap_angle(theta);
    if th.abs() < 0.6 {
        (-12.0 * th - 3.0 * omega).clamp(-limit, limit)
    } else if omega >= 0.0 {
        limit
    } else {
        -limit
    }
}

fn pendulum_rollout(mode: ExecutionMode, latency: f64, steps: usize) -> Result<Rollout> {
    let params = PendulumParams {
        horizon: steps.max(1),
        ..PendulumParams::default()
    };
    let mut env = ConcurrentEnv::new(Box::new(Pendulum::new(params)), wrapper(mode, latency), 7)?;
    env.reset();
    let mut time = vec![0.0];
    let mut theta = vec![env.state()[0]];
    let mut history = Vec::new();
    let mut ret = 0.0;
    let mut clock = 0.0;
    while !env.is_done() {
        let (th, om) = (env.state()[0], env.state()[1]);
        let tr = env.step(&[swing_up(th, om, params.torque_limit)])?;
        clock += tr.sim_duration;
        ret += tr.reward;
        time.push(clock);
        theta.push(tr.next_state[0]);
        history.push(tr);
    }
    Ok(Rollout {
        mode: mode.as_str(),
        time,
        theta,
        episode_return: ret,
        sim_duration_s: clock,
        action_completion: action_completion(&history)?,
    })
}

#[derive(Serialize)]
struct Certificate {
    trials: usize,
    moduli: Vec<f64>,
    max_observed_modulus: f64,
    bound: f64,
    holds: bool,
}

/// Empirical contraction modulus of the concurrent Bellman operator on one
/// random MDP, against the bound `γ^ℓ`.
#[wasm_bindgen]
pub fn contraction_certificate(
    n_states: u32,
    n_actions: u32,
    gamma: f64,
    latency_fraction: f64,
    trials: u32,
    seed: u64,
) -> String {
    respond((|| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = FiniteConcurrentMdp::random(
            n_states as usize,
            n_actions as usize,
            vec![latency_fraction],
            gamma,
            SpilloverMode::Fixed,
            &mut rng,
        )?;
        let rep = certificate_with(&mdp, trials as usize, &mut rng, Operator::Concurrent)?;
        Ok(Certificate {
            trials: rep.trials.len(),
            moduli: rep.trials.iter().map(|t| t.modulus).collect(),
            max_observed_modulus: rep.max_observed_modulus,
            bound: rep.bound,
            holds: rep.holds(concurrent_rl::tabular::CONTRACTION_TOLERANCE),
        })
    })())
}
