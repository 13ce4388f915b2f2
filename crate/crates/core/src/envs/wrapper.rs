use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{ensure, Result};
use crate::sim::{integrate, ActionTrajectory, ConcurrentTransition, RewardMode, TimeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// The world is frozen during capture and inference; every action ramps
    /// to completion before the next observation.
    Blocking,
    /// The previous action keeps running for `t_AS` seconds while the next
    /// one is being selected.
    #[default]
    Concurrent,
}

impl ExecutionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExecutionMode::Blocking => "blocking",
            ExecutionMode::Concurrent => "concurrent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencySchedule {
    /// One latency, in seconds, for the life of the environment.
    Fixed { latency: f64 },
    /// A latency drawn uniformly from `set` at every reset.
    PerEpisode { set: Vec<f64> },
}

impl Default for LatencySchedule {
    fn default() -> Self {
        LatencySchedule::Fixed { latency: 0.0 }
    }
}

impl LatencySchedule {
    pub fn values(&self) -> &[f64] {
        match self {
            LatencySchedule::Fixed { latency } => std::slice::from_ref(latency),
            LatencySchedule::PerEpisode { set } => set,
        }
    }

    pub fn max_latency(&self) -> f64 {
        self.values().iter().copied().fold(0.0, f64::max)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            LatencySchedule::Fixed { .. } => "fixed",
            LatencySchedule::PerEpisode { .. } => "per_episode",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrapperConfig {
    pub execution_mode: ExecutionMode,
    pub latency_schedule: LatencySchedule,
    /// Extra ramp time beyond `H`, in seconds, so actions outlast a period.
    pub action_execution_extra: f64,
    pub sampling_period: f64,
    pub physics_dt: f64,
    pub gamma: f64,
    pub reward_mode: RewardMode,
    /// Overrides the task's default episode length.
    pub horizon: Option<usize>,
}

impl Default for WrapperConfig {
    fn default() -> Self {
        WrapperConfig {
            execution_mode: ExecutionMode::Concurrent,
            latency_schedule: LatencySchedule::default(),
            action_execution_extra: 0.0,
            sampling_period: 0.1,
            physics_dt: 0.001,
            gamma: 0.99,
            reward_mode: RewardMode::Integrated,
            horizon: None,
        }
    }
}

impl WrapperConfig {
    pub fn validate(&self) -> Result<()> {
        let values = self.latency_schedule.values();
        ensure!(!values.is_empty(), "latency set is empty");
        for &l in values {
            TimeModel::new(self.sampling_period, l, l, self.gamma, self.physics_dt)?;
        }
        ensure!(
            self.action_execution_extra >= 0.0,
            "action execution extra must be non-negative"
        );
        let tm = TimeModel::new(self.sampling_period, 0.0, 0.0, self.gamma, self.physics_dt)?;
        tm.ticks(self.action_execution_extra)?;
        ensure!(self.horizon != Some(0), "horizon must be positive");
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reset {
    pub observation: Vec<f64>,
    /// Latency the agent will experience on every step of this episode.
    pub latency: f64,
}

/// Runs a [`Task`] under blocking or concurrent execution with latency
/// injection. Owns its RNG; time is kept as an integer tick count.
pub struct ConcurrentEnv {
    task: Box<dyn Task>,
    config: WrapperConfig,
    rng: ChaCha8Rng,
    state: Vec<f64>,
    traj: ActionTrajectory,
    prev_action: Vec<f64>,
    tick: u64,
    steps: usize,
    latency: f64,
    done: bool,
    sim_time: f64,
}

impl std::fmt::Debug for ConcurrentEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConcurrentEnv")
            .field("task", &self.task.name())
            .field("config", &self.config)
            .field("state", &self.state)
            .field("tick", &self.tick)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl ConcurrentEnv {
    pub fn new(task: Box<dyn Task>, config: WrapperConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let rest = task.rest_action();
        let mut env = ConcurrentEnv {
            state: vec![0.0; task.state_dim()],
            prev_action: vec![0.0; task.action_dim()],
            traj: ActionTrajectory::hold(rest, 0.0),
            task,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tick: 0,
            steps: 0,
            latency: 0.0,
            done: true,
            sim_time: 0.0,
        };
        env.latency = env.config.latency_schedule.values()[0];
        Ok(env)
    }

    pub fn reset(&mut self) -> Reset {
        if let LatencySchedule::PerEpisode { set } = &self.config.latency_schedule {
            self.latency = set[self.rng.random_range(0..set.len())];
        }
        self.state = self.task.reset_state(&mut self.rng);
        self.traj = ActionTrajectory::hold(self.task.rest_action(), 0.0);
        self.prev_action = vec![0.0; self.task.action_dim()];
        self.tick = 0;
        self.steps = 0;
        self.done = false;
        self.sim_time = 0.0;
        Reset {
            observation: self.observation(),
            latency: self.latency,
        }
    }

    /// Places the environment mid-episode at `state` with `pending` as the
    /// trajectory still executing at the current time.
    pub fn set_state(
        &mut self,
        state: Vec<f64>,
        pending: ActionTrajectory,
        time: f64,
    ) -> Result<()> {
        ensure!(
            state.len() == self.task.state_dim(),
            "state has {} dims, task expects {}",
            state.len(),
            self.task.state_dim()
        );
        ensure!(
            pending.dim() == self.task.action_dim(),
            "trajectory dimension mismatch"
        );
        let tick = self.time_model(0.0)?.ticks(time)?;
        pending.value_at(time)?;
        self.state = state;
        self.traj = pending;
        self.tick = tick as u64;
        self.done = false;
        Ok(())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<ConcurrentTransition> {
        ensure!(
            !self.done,
            "step called on a finished episode; call reset first"
        );
        ensure!(
            action.len() == self.task.action_dim(),
            "action has {} dims, task expects {}",
            action.len(),
            self.task.action_dim()
        );
        let h = self.config.sampling_period;
        let dt = self.config.physics_dt;
        let extra = self.config.action_execution_extra;
        let mode = self.config.reward_mode;
        let t = self.tick as f64 * dt;
        let lat = match self.config.execution_mode {
            ExecutionMode::Concurrent => self.latency,
            ExecutionMode::Blocking => 0.0,
        };
        let tm = self.time_model(lat)?;
        let task = self.task.as_ref();

        // Rolled-over segment: the previous ramp keeps running during t_AS.
        let t_switch = (self.tick + tm.ticks(lat)? as u64) as f64 * dt;
        let seg1 = integrate(
            task,
            &self.state,
            &self.traj,
            t,
            t_switch,
            &tm,
            mode,
            &mut self.rng,
        )?;

        let current = self.traj.value_at(t_switch)?;
        let origin = task.ramp_origin(&seg1.state, &current);
        let target = task.ramp_target(&origin, action);
        let commanded = task.commanded(&origin, action);
        let switch_pos = task.actuator_position(&seg1.state, &current);
        let traj = ActionTrajectory::new(origin, target, t_switch, h + extra)?;

        let (t_end, sim_duration) = match self.config.execution_mode {
            ExecutionMode::Concurrent => (t + h, h),
            ExecutionMode::Blocking => (t + h + extra, h + extra + self.latency),
        };
        let end_tick = self.tick + tm.ticks(t_end - t)? as u64;
        let t_end = end_tick as f64 * dt;
        let seg2 = integrate(
            task,
            &seg1.state,
            &traj,
            t_switch,
            t_end,
            &tm,
            mode,
            &mut self.rng,
        )?;

        let mut reward = match mode {
            RewardMode::Integrated => seg1.reward + tm.discount_over(lat) * seg2.reward,
            RewardMode::PointSample => seg2.reward,
        };
        let terminal = task.terminal(&seg2.state);
        if terminal {
            reward += task.terminal_reward(&seg2.state);
        }
        let end_value = traj.value_at(t_end)?;
        let executed = task
            .actuator_position(&seg2.state, &end_value)
            .iter()
            .zip(&switch_pos)
            .map(|(e, s)| e - s)
            .collect();

        let transition = ConcurrentTransition {
            state: task.observe(&self.state),
            prev_action: std::mem::replace(&mut self.prev_action, action.to_vec()),
            action: action.to_vec(),
            latency_fraction: lat / h,
            spillover_fraction: lat / h,
            reward,
            next_state: task.observe(&seg2.state),
            terminal,
            commanded,
            executed,
            sim_duration,
        };
        self.state = seg2.state;
        self.traj = traj;
        self.tick = end_tick;
        self.steps += 1;
        self.sim_time += sim_duration;
        self.done = terminal || self.steps >= self.horizon();
        Ok(transition)
    }

    fn time_model(&self, latency: f64) -> Result<TimeModel> {
        TimeModel::new(
            self.config.sampling_period,
            latency,
            latency,
            self.config.gamma,
            self.config.physics_dt,
        )
    }

    pub fn observation(&self) -> Vec<f64> {
        self.task.observe(&self.state)
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn task(&self) -> &dyn Task {
        self.task.as_ref()
    }

    pub fn config(&self) -> &WrapperConfig {
        &self.config
    }

    /// Trajectory executing at the current capture time.
    pub fn pending_trajectory(&self) -> &ActionTrajectory {
        &self.traj
    }

    /// Current simulated time in seconds (physics time, excluding stalls).
    pub fn now(&self) -> f64 {
        self.tick as f64 * self.config.physics_dt
    }

    /// Latency of the current episode, in seconds.
    pub fn latency(&self) -> f64 {
        self.latency
    }

    /// Latency the agent actually experiences: zero under blocking execution.
    pub fn effective_latency(&self) -> f64 {
        match self.config.execution_mode {
            ExecutionMode::Concurrent => self.latency,
            ExecutionMode::Blocking => 0.0,
        }
    }

    pub fn prev_action(&self) -> &[f64] {
        &self.prev_action
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon.unwrap_or_else(|| self.task.horizon())
    }

    /// Simulated wall time of the episode so far, including blocking stalls.
    pub fn episode_sim_time(&self) -> f64 {
        self.sim_time
    }
}

/// Mean over steps of `min(‖executed‖ / ‖commanded‖, 1)`, skipping steps
/// with a zero command.
pub fn action_completion(history: &[ConcurrentTransition]) -> Result<f64> {
    ensure!(
        !history.is_empty(),
        "action completion needs at least one step"
    );
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut sum = 0.0;
    let mut n = 0usize;
    for tr in history {
        let c = norm(&tr.commanded);
        if c == 0.0 {
            continue;
        }
        sum += (norm(&tr.executed) / c).min(1.0);
        n += 1;
    }
    Ok(if n == 0 { 1.0 } else { sum / n as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Pendulum, PendulumParams, Pointmass, PointmassParams};

    fn pointmass_env(mode: ExecutionMode, latency: f64) -> ConcurrentEnv {
        let config = WrapperConfig {
            execution_mode: mode,
            latency_schedule: LatencySchedule::Fixed { latency },
            ..Default::default()
        };
        ConcurrentEnv::new(
            Box::new(Pointmass::new(PointmassParams::default())),
            config,
            0,
        )
        .unwrap()
    }

    #[test]
    fn blocking_pointmass_executes_fully() {
        let mut env = pointmass_env(ExecutionMode::Blocking, 0.05);
        env.reset();
        env.set_state(
            vec![0.0, 0.0],
            ActionTrajectory::hold(vec![0.0, 0.0], 0.0),
            0.0,
        )
        .unwrap();
        let tr = env.step(&[0.1, 0.0]).unwrap();
        assert!((env.state()[0] - 0.1).abs() < 1e-12);
        assert!(env.state()[1].abs() < 1e-12);
        assert!((action_completion(std::slice::from_ref(&tr)).unwrap() - 1.0).abs() < 1e-9);
        assert!((tr.sim_duration - 0.15).abs() < 1e-12);
        assert_eq!(tr.latency_fraction, 0.0);
    }

    #[test]
    fn concurrent_pointmass_rolls_over_previous_ramp() {
        let mut env = pointmass_env(ExecutionMode::Concurrent, 0.05);
        env.reset();
        let pending = ActionTrajectory::new(vec![0.0, 0.0], vec![0.1, 0.0], 0.0, 0.1).unwrap();
        env.set_state(vec![0.0, 0.0], pending, 0.0).unwrap();
        let tr = env.step(&[0.0, 0.1]).unwrap();
        assert!((env.state()[0] - 0.05).abs() < 1e-12, "{:?}", env.state());
        assert!((env.state()[1] - 0.05).abs() < 1e-12, "{:?}", env.state());
        assert!((tr.latency_fraction - 0.5).abs() < 1e-15);
        assert!((tr.sim_duration - 0.1).abs() < 1e-15);
        assert!((action_completion(&[tr]).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn zero_latency_concurrent_matches_blocking() {
        let run = |mode| {
            let config = WrapperConfig {
                execution_mode: mode,
                ..Default::default()
            };
            let mut env = ConcurrentEnv::new(
                Box::new(Pendulum::new(PendulumParams::default())),
                config,
                11,
            )
            .unwrap();
            env.reset();
            let mut out = Vec::new();
            let mut k = 0;
            while !env.is_done() {
                let a = [(k % 5) as f64 - 2.0];
                out.push(env.step(&a).unwrap());
                k += 1;
            }
            out
        };
        assert_eq!(run(ExecutionMode::Concurrent), run(ExecutionMode::Blocking));
    }

    #[test]
    fn completion_falls_with_latency() {
        let mut last = f64::INFINITY;
        for latency in [0.0, 0.025, 0.05] {
            let mut env = pointmass_env(ExecutionMode::Concurrent, latency);
            env.reset();
            env.set_state(
                vec![0.2, 0.2],
                ActionTrajectory::hold(vec![0.2, 0.2], 0.0),
                0.0,
            )
            .unwrap();
            let history: Vec<_> = (0..4).map(|_| env.step(&[0.05, 0.0]).unwrap()).collect();
            let c = action_completion(&history).unwrap();
            assert!(c <= last + 1e-12, "latency {latency}: {c} > {last}");
            last = c;
        }
        assert!((last - 0.5).abs() < 1e-9);
    }

    #[test]
    fn per_episode_latency_frequencies() {
        let set = vec![0.0, 0.005, 0.01, 0.025, 0.05];
        let config = WrapperConfig {
            latency_schedule: LatencySchedule::PerEpisode { set: set.clone() },
            ..Default::default()
        };
        let mut env = ConcurrentEnv::new(
            Box::new(Pointmass::new(PointmassParams::default())),
            config,
            5,
        )
        .unwrap();
        let mut counts = [0usize; 5];
        let n = 10_000;
        for _ in 0..n {
            let l = env.reset().latency;
            counts[set.iter().position(|x| *x == l).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 0.2).abs() <= 0.02, "{counts:?}");
        }
    }

    #[test]
    fn resets_are_seed_deterministic() {
        let make = || {
            ConcurrentEnv::new(
                Box::new(Pendulum::new(PendulumParams::default())),
                WrapperConfig::default(),
                3,
            )
            .unwrap()
        };
        assert_eq!(make().reset(), make().reset());
    }

    #[test]
    fn finished_episode_rejects_steps() {
        let mut env = pointmass_env(ExecutionMode::Blocking, 0.0);
        assert!(env.step(&[0.0, 0.0]).is_err());
        env.reset();
        env.set_state(
            vec![0.35, 0.5],
            ActionTrajectory::hold(vec![0.35, 0.5], 0.0),
            0.0,
        )
        .unwrap();
        let tr = env.step(&[0.15, 0.0]).unwrap();
        assert!(tr.terminal);
        assert_eq!(tr.reward, 1.0);
        assert!(matches!(
            env.step(&[0.0, 0.0]),
            Err(crate::Error::Contract(_))
        ));
    }

    #[test]
    fn invalid_latency_rejected() {
        let config = WrapperConfig {
            latency_schedule: LatencySchedule::Fixed { latency: 0.1 },
            ..Default::default()
        };
        assert!(ConcurrentEnv::new(
            Box::new(Pointmass::new(PointmassParams::default())),
            config,
            0
        )
        .is_err());
        let config = WrapperConfig {
            latency_schedule: LatencySchedule::Fixed { latency: 0.0005 },
            ..Default::default()
        };
        assert!(ConcurrentEnv::new(
            Box::new(Pointmass::new(PointmassParams::default())),
            config,
            0
        )
        .is_err());
    }

    #[test]
    fn episode_time_accounting() {
        for (mode, per_step) in [
            (ExecutionMode::Concurrent, 0.1),
            (ExecutionMode::Blocking, 0.125),
        ] {
            let config = WrapperConfig {
                execution_mode: mode,
                latency_schedule: LatencySchedule::Fixed { latency: 0.025 },
                horizon: Some(20),
                ..Default::default()
            };
            let mut env = ConcurrentEnv::new(
                Box::new(Pendulum::new(PendulumParams::default())),
                config,
                1,
            )
            .unwrap();
            env.reset();
            while !env.is_done() {
                env.step(&[1.0]).unwrap();
            }
            assert!((env.episode_sim_time() - 20.0 * per_step).abs() < 1e-9);
        }
    }
}
