use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::sim::{Control, Dynamics};

/// Torque-driven pendulum with `θ = 0` upright and `θ = π` hanging down.
///
/// `θ̈ = (g/l) sin θ + u/(m l²) − c θ̇`, with `u` clamped to the torque limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
    pub torque_limit: f64,
    pub damping: f64,
    /// Diffusion scale on the angular velocity; zero is deterministic.
    pub process_noise: f64,
    pub horizon: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
            torque_limit: 2.0,
            damping: 0.01,
            process_noise: 0.0,
            horizon: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    pub params: PendulumParams,
    noise: [f64; 2],
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Self {
        Pendulum {
            params,
            noise: [0.0, params.process_noise],
        }
    }

    /// Kinetic plus potential energy, zero when hanging at rest.
    pub fn energy(&self, state: &[f64]) -> f64 {
        let p = &self.params;
        let inertia = p.mass * p.length * p.length;
        0.5 * inertia * state[1] * state[1] + p.mass * p.gravity * p.length * (1.0 + state[0].cos())
    }
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

impl Dynamics for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, s: &[f64], c: Control<'_>, out: &mut [f64]) {
        let p = &self.params;
        let u = c.value[0].clamp(-p.torque_limit, p.torque_limit);
        out[0] = s[1];
        out[1] = p.gravity / p.length * s[0].sin() + u / (p.mass * p.length * p.length)
            - p.damping * s[1];
    }

    fn diffusion(&self) -> Option<&[f64]> {
        (self.params.process_noise > 0.0).then_some(&self.noise[..])
    }

    fn reward(&self, s: &[f64], _u: &[f64]) -> f64 {
        (1.0 + s[0].cos()) / 2.0
    }

    fn project(&self, s: &mut [f64]) {
        s[0] = wrap_angle(s[0]);
    }

    fn mechanical_pairs(&self) -> &[(usize, usize)] {
        &[(0, 1)]
    }
}

impl Task for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn reset_state(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        let theta = wrap_angle(PI + rng.random_range(-0.1..0.1));
        vec![theta, rng.random_range(-0.05..=0.05)]
    }

    fn observe(&self, s: &[f64]) -> Vec<f64> {
        vec![s[0].cos(), s[0].sin(), s[1]]
    }

    fn observation_dim(&self) -> usize {
        3
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.params.torque_limit;
        (vec![-l], vec![l])
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }
}
