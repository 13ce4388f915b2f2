//! Toy control tasks and the wrapper that runs them in blocking or concurrent
//! execution.

mod cartpole;
mod pendulum;
mod pointmass;
mod wrapper;

pub use cartpole::{Cartpole, CartpoleParams};
pub use pendulum::{wrap_angle, Pendulum, PendulumParams};
pub use pointmass::{Pointmass, PointmassParams};
pub use wrapper::{
    action_completion, ConcurrentEnv, ExecutionMode, LatencySchedule, Reset, WrapperConfig,
};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::sim::Dynamics;

/// A control task: dynamics plus everything the wrapper needs to run
/// episodes and turn agent actions into actuator ramps.
pub trait Task: Dynamics + Send + Sync {
    fn name(&self) -> &'static str;

    fn reset_state(&self, rng: &mut dyn RngCore) -> Vec<f64>;

    fn observe(&self, state: &[f64]) -> Vec<f64>;

    fn observation_dim(&self) -> usize;

    /// Per-dimension `(low, high)` bounds on agent actions.
    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>);

    fn terminal(&self, _state: &[f64]) -> bool {
        false
    }

    /// One-off reward granted on the step that enters a terminal state.
    fn terminal_reward(&self, _state: &[f64]) -> f64 {
        0.0
    }

    /// Actuator value a new ramp starts from, given the value the previous
    /// ramp had reached at the switch.
    fn ramp_origin(&self, _state: &[f64], current: &[f64]) -> Vec<f64> {
        current.to_vec()
    }

    /// Actuator value a new ramp heads for. Actions are absolute levels by
    /// default.
    fn ramp_target(&self, _origin: &[f64], action: &[f64]) -> Vec<f64> {
        action.to_vec()
    }

    /// Physical actuator position used to measure executed displacement.
    fn actuator_position(&self, _state: &[f64], value: &[f64]) -> Vec<f64> {
        value.to_vec()
    }

    /// Displacement an action commands, starting from `origin`.
    fn commanded(&self, origin: &[f64], action: &[f64]) -> Vec<f64> {
        self.ramp_target(origin, action)
            .iter()
            .zip(origin)
            .map(|(t, o)| t - o)
            .collect()
    }

    /// Actuator value held before the first action of an episode.
    fn rest_action(&self) -> Vec<f64> {
        vec![0.0; self.action_dim()]
    }

    /// Default episode length in steps.
    fn horizon(&self) -> usize;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum TaskConfig {
    Pendulum(PendulumParams),
    Cartpole(CartpoleParams),
    Pointmass(PointmassParams),
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig::Pendulum(PendulumParams::default())
    }
}

impl TaskConfig {
    pub fn build(&self) -> Box<dyn Task> {
        match self {
            TaskConfig::Pendulum(p) => Box::new(Pendulum::new(*p)),
            TaskConfig::Cartpole(p) => Box::new(Cartpole::new(*p)),
            TaskConfig::Pointmass(p) => Box::new(Pointmass::new(*p)),
        }
    }
}
