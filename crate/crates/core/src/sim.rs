//! Time model, action trajectories and the fixed-step integrator shared by
//! every environment.
//!
//! Time is measured in seconds. Discounting is expressed per sampling period
//! `H`, so a span of `d` seconds is discounted by `gamma^(d / H)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Relative tolerance used when checking that durations are whole tick counts.
const TICK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    /// Sampling period `H` between state captures.
    pub sampling_period: f64,
    /// Action-selection time `t_AS` of the current step.
    pub latency: f64,
    /// Latency offset at which the next action will begin (`t_AS'`).
    pub spillover: f64,
    /// Discount per sampling period.
    pub gamma: f64,
    pub physics_dt: f64,
}

impl TimeModel {
    pub fn new(
        sampling_period: f64,
        latency: f64,
        spillover: f64,
        gamma: f64,
        physics_dt: f64,
    ) -> Result<Self> {
        ensure!(
            sampling_period > 0.0 && sampling_period.is_finite(),
            "sampling period must be positive, got {sampling_period}"
        );
        ensure!(
            physics_dt > 0.0 && physics_dt <= sampling_period,
            "physics dt must be in (0, H], got {physics_dt}"
        );
        ensure!(
            (0.0..sampling_period).contains(&latency),
            "latency {latency} outside [0, H={sampling_period})"
        );
        ensure!(
            (0.0..sampling_period).contains(&spillover),
            "spillover {spillover} outside [0, H={sampling_period})"
        );
        ensure!(gamma > 0.0 && gamma <= 1.0, "gamma {gamma} outside (0, 1]");
        let model = TimeModel {
            sampling_period,
            latency,
            spillover,
            gamma,
            physics_dt,
        };
        model.ticks(sampling_period)?;
        model.ticks(latency)?;
        model.ticks(spillover)?;
        Ok(model)
    }

    pub fn latency_fraction(&self) -> f64 {
        self.latency / self.sampling_period
    }

    pub fn spillover_fraction(&self) -> f64 {
        self.spillover / self.sampling_period
    }

    /// Number of physics ticks spanning `duration`; errors unless the duration
    /// is a whole number of ticks.
    pub fn ticks(&self, duration: f64) -> Result<usize> {
        ensure!(duration >= 0.0, "negative duration {duration}");
        let n = duration / self.physics_dt;
        let rounded = n.round();
        ensure!(
            (n - rounded).abs() <= TICK_TOLERANCE * rounded.max(1.0),
            "duration {duration}s is not a multiple of physics dt {}s",
            self.physics_dt
        );
        Ok(rounded as usize)
    }

    /// `gamma^(duration / H)`.
    pub fn discount_over(&self, duration: f64) -> f64 {
        self.gamma.powf(duration / self.sampling_period)
    }

    pub fn with_latency(self, latency: f64, spillover: f64) -> Result<Self> {
        TimeModel::new(
            self.sampling_period,
            latency,
            spillover,
            self.gamma,
            self.physics_dt,
        )
    }
}

/// Linear ramp from `start_value` to `target_value`, held at the target once
/// the ramp has finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTrajectory {
    pub start_value: Vec<f64>,
    pub target_value: Vec<f64>,
    pub start_time: f64,
    pub ramp_duration: f64,
}

impl ActionTrajectory {
    pub fn new(
        start_value: Vec<f64>,
        target_value: Vec<f64>,
        start_time: f64,
        ramp_duration: f64,
    ) -> Result<Self> {
        ensure!(
            start_value.len() == target_value.len(),
            "ramp endpoints differ in dimension ({} vs {})",
            start_value.len(),
            target_value.len()
        );
        ensure!(
            ramp_duration > 0.0,
            "ramp duration must be positive, got {ramp_duration}"
        );
        Ok(ActionTrajectory {
            start_value,
            target_value,
            start_time,
            ramp_duration,
        })
    }

    /// A trajectory that holds `value` from `start_time` on.
    pub fn hold(value: Vec<f64>, start_time: f64) -> Self {
        ActionTrajectory {
            target_value: value.clone(),
            start_value: value,
            start_time,
            ramp_duration: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.start_value.len()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.ramp_duration
    }

    /// Fraction of the ramp elapsed at `t`, in `[0, 1]`.
    pub fn progress(&self, t: f64) -> f64 {
        if t >= self.end_time() {
            return 1.0;
        }
        ((t - self.start_time) / self.ramp_duration).clamp(0.0, 1.0)
    }

    pub fn value_at(&self, t: f64) -> Result<Vec<f64>> {
        // Tick times are accumulated sums; allow rounding below the start.
        ensure!(
            t >= self.start_time - 1e-12 * self.start_time.abs().max(1.0),
            "trajectory queried at t={t} before its start {}",
            self.start_time
        );
        let mut out = vec![0.0; self.dim()];
        self.write_value(t, &mut out);
        Ok(out)
    }

    fn write_value(&self, t: f64, out: &mut [f64]) {
        let f = self.progress(t);
        if f >= 1.0 {
            out.copy_from_slice(&self.target_value);
        } else if f <= 0.0 {
            out.copy_from_slice(&self.start_value);
        } else {
            for ((o, s), g) in out
                .iter_mut()
                .zip(&self.start_value)
                .zip(&self.target_value)
            {
                *o = s + f * (g - s);
            }
        }
    }

    /// Full commanded displacement `target - start`.
    pub fn displacement(&self) -> Vec<f64> {
        self.target_value
            .iter()
            .zip(&self.start_value)
            .map(|(g, s)| g - s)
            .collect()
    }
}

/// One learning tuple `(s_t, a_{t-1}, a_t, t_AS/H, t_AS'/H, r, s_{t+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcurrentTransition {
    pub state: Vec<f64>,
    pub prev_action: Vec<f64>,
    pub action: Vec<f64>,
    pub latency_fraction: f64,
    pub spillover_fraction: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
    /// Displacement commanded by `action`, in actuator units.
    pub commanded: Vec<f64>,
    /// Portion of `commanded` executed by the time `next_state` was captured.
    pub executed: Vec<f64>,
    /// Simulated wall time charged to this step, including any blocking stall.
    pub sim_duration: f64,
}

/// Actuator value seen by the dynamics at one tick, together with its rate of
/// change over the tick.
#[derive(Debug, Clone, Copy)]
pub struct Control<'a> {
    pub value: &'a [f64],
    pub rate: &'a [f64],
}

/// Continuous-time dynamics `ds = F(s, a) dt + G dβ` with a reward rate.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    /// Writes `F(state, control)` into `out`.
    fn drift(&self, state: &[f64], control: Control<'_>, out: &mut [f64]);

    /// Per-dimension diffusion scale; `None` means deterministic.
    fn diffusion(&self) -> Option<&[f64]> {
        None
    }

    /// Instantaneous reward rate, in `[0, 1]` for the bundled environments.
    fn reward(&self, state: &[f64], control: &[f64]) -> f64;

    /// Applied after each tick (angle wrapping, bound clamping).
    fn project(&self, _state: &mut [f64]) {}

    /// `(position, velocity)` index pairs integrated semi-implicitly: the
    /// velocity is advanced first and the position uses the new velocity.
    fn mechanical_pairs(&self) -> &[(usize, usize)] {
        &[]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardMode {
    /// Discounted rectangle-rule integral of the reward rate over the span,
    /// measured in units of `H`.
    #[default]
    Integrated,
    /// Reward rate sampled once at the end of the span.
    PointSample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub state: Vec<f64>,
    pub reward: f64,
}

/// Advances `state` from `t0` to `t1` under `traj` with fixed-step Euler
/// (Euler–Maruyama when the dynamics carry diffusion).
pub fn integrate<D: Dynamics + ?Sized, R: Rng + ?Sized>(
    dynamics: &D,
    state: &[f64],
    traj: &ActionTrajectory,
    t0: f64,
    t1: f64,
    time: &TimeModel,
    reward_mode: RewardMode,
    rng: &mut R,
) -> Result<Segment> {
    ensure!(t1 >= t0, "integration interval reversed: {t0} > {t1}");
    ensure!(
        state.len() == dynamics.state_dim(),
        "state has {} dims, dynamics expect {}",
        state.len(),
        dynamics.state_dim()
    );
    ensure!(
        traj.dim() == dynamics.action_dim(),
        "trajectory has {} dims, dynamics expect {}",
        traj.dim(),
        dynamics.action_dim()
    );
    traj.value_at(t0)?;
    let n = time.ticks(t1 - t0)?;
    let dt = time.physics_dt;
    let tick_discount = time.discount_over(dt);
    let reward_weight = dt / time.sampling_period;
    let sqrt_dt = dt.sqrt();

    let mut s = state.to_vec();
    let mut deriv = vec![0.0; s.len()];
    let mut u = vec![0.0; traj.dim()];
    let mut u_next = vec![0.0; traj.dim()];
    let mut rate = vec![0.0; traj.dim()];
    let mut weight = 1.0;
    let mut reward = 0.0;

    for k in 0..n {
        let t = t0 + k as f64 * dt;
        traj.write_value(t, &mut u);
        traj.write_value(t + dt, &mut u_next);
        for ((r, a), b) in rate.iter_mut().zip(&u).zip(&u_next) {
            *r = (b - a) / dt;
        }
        if reward_mode == RewardMode::Integrated {
            reward += weight * reward_weight * dynamics.reward(&s, &u);
            weight *= tick_discount;
        }
        dynamics.drift(
            &s,
            Control {
                value: &u,
                rate: &rate,
            },
            &mut deriv,
        );
        for &(p, v) in dynamics.mechanical_pairs() {
            deriv[p] = s[v] + deriv[v] * dt;
        }
        for (x, d) in s.iter_mut().zip(&deriv) {
            *x += d * dt;
        }
        if let Some(scale) = dynamics.diffusion() {
            for (x, g) in s.iter_mut().zip(scale) {
                if *g != 0.0 {
                    let z: f64 = rng.sample(StandardNormal);
                    *x += g * sqrt_dt * z;
                }
            }
        }
        dynamics.project(&mut s);
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::divergence(format!(
                "non-finite state at tick {k} (t={t:.6}s): {s:?}"
            )));
        }
    }

    if reward_mode == RewardMode::PointSample {
        traj.write_value(t1, &mut u);
        reward = dynamics.reward(&s, &u);
    }
    Ok(Segment { state: s, reward })
}
