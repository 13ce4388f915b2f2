use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{wrap_angle, Task};
use crate::sim::{Control, Dynamics};

/// Cart-pole swing-up. State is `[x, ẋ, θ, θ̇]` with `θ = 0` upright; the
/// actuator value is the horizontal force on the cart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartpoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's centre of mass.
    pub half_length: f64,
    pub gravity: f64,
    pub force_limit: f64,
    pub track_limit: f64,
    pub process_noise: f64,
    pub horizon: usize,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            half_length: 0.5,
            gravity: 9.81,
            force_limit: 10.0,
            track_limit: 2.4,
            process_noise: 0.0,
            horizon: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cartpole {
    pub params: CartpoleParams,
    noise: [f64; 4],
}

impl Cartpole {
    pub fn new(params: CartpoleParams) -> Self {
        let g = params.process_noise;
        Cartpole {
            params,
            noise: [0.0, g, 0.0, g],
        }
    }
}

impl Dynamics for Cartpole {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    // Barto, Sutton & Anderson (1983), frictionless.
    fn drift(&self, s: &[f64], c: Control<'_>, out: &mut [f64]) {
        let p = &self.params;
        let force = c.value[0].clamp(-p.force_limit, p.force_limit);
        let total = p.cart_mass + p.pole_mass;
        let (sin, cos) = s[2].sin_cos();
        let temp = (force + p.pole_mass * p.half_length * s[3] * s[3] * sin) / total;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.half_length * (4.0 / 3.0 - p.pole_mass * cos * cos / total));
        let x_acc = temp - p.pole_mass * p.half_length * theta_acc * cos / total;
        out[0] = s[1];
        out[1] = x_acc;
        out[2] = s[3];
        out[3] = theta_acc;
    }

    fn diffusion(&self) -> Option<&[f64]> {
        (self.params.process_noise > 0.0).then_some(&self.noise[..])
    }

    fn reward(&self, s: &[f64], _u: &[f64]) -> f64 {
        let centred = 1.0 - (s[0] / self.params.track_limit).powi(2);
        (1.0 + s[2].cos()) / 2.0 * centred.max(0.0)
    }

    fn project(&self, s: &mut [f64]) {
        s[2] = wrap_angle(s[2]);
    }

    fn mechanical_pairs(&self) -> &[(usize, usize)] {
        &[(0, 1), (2, 3)]
    }
}

impl Task for Cartpole {
    fn name(&self) -> &'static str {
        "cartpole"
    }

    fn reset_state(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        vec![
            rng.random_range(-0.05..=0.05),
            rng.random_range(-0.05..=0.05),
            wrap_angle(PI + rng.random_range(-0.1..0.1)),
            rng.random_range(-0.05..=0.05),
        ]
    }

    fn observe(&self, s: &[f64]) -> Vec<f64> {
        vec![s[0], s[1], s[2].cos(), s[2].sin(), s[3]]
    }

    fn observation_dim(&self) -> usize {
        5
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let f = self.params.force_limit;
        (vec![-f], vec![f])
    }

    fn terminal(&self, s: &[f64]) -> bool {
        s[0].abs() > self.params.track_limit
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }
}
