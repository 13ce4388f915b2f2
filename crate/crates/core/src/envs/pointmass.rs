use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::sim::{Control, Dynamics};

/// Reach task on the unit square. Actions are displacements executed as
/// position ramps, so the actuator value is the commanded position and the
/// mass tracks it exactly unless a wall gets in the way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointmassParams {
    /// Largest displacement per action along each axis.
    pub max_step: f64,
    pub goal: [f64; 2],
    pub goal_radius: f64,
    pub horizon: usize,
}

impl Default for PointmassParams {
    fn default() -> Self {
        PointmassParams {
            max_step: 0.2,
            goal: [0.5, 0.5],
            goal_radius: 0.1,
            horizon: 50,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Pointmass {
    pub params: PointmassParams,
}

impl Pointmass {
    pub fn new(params: PointmassParams) -> Self {
        Pointmass { params }
    }

    pub fn in_goal(&self, s: &[f64]) -> bool {
        let [gx, gy] = self.params.goal;
        (s[0] - gx).hypot(s[1] - gy) <= self.params.goal_radius
    }

    fn clamp_action(&self, a: &[f64]) -> Vec<f64> {
        let m = self.params.max_step;
        a.iter().map(|x| x.clamp(-m, m)).collect()
    }
}

impl Dynamics for Pointmass {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn drift(&self, _s: &[f64], c: Control<'_>, out: &mut [f64]) {
        out.copy_from_slice(c.rate);
    }

    fn reward(&self, _s: &[f64], _u: &[f64]) -> f64 {
        0.0
    }

    fn project(&self, s: &mut [f64]) {
        for x in s.iter_mut() {
            *x = x.clamp(0.0, 1.0);
        }
    }
}

impl Task for Pointmass {
    fn name(&self) -> &'static str {
        "pointmass"
    }

    fn reset_state(&self, rng: &mut dyn rand::RngCore) -> Vec<f64> {
        loop {
            let s = vec![rng.random::<f64>(), rng.random::<f64>()];
            if !self.in_goal(&s) {
                return s;
            }
        }
    }

    fn observe(&self, s: &[f64]) -> Vec<f64> {
        s.to_vec()
    }

    fn observation_dim(&self) -> usize {
        2
    }

    fn action_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let m = self.params.max_step;
        (vec![-m, -m], vec![m, m])
    }

    fn terminal(&self, s: &[f64]) -> bool {
        self.in_goal(s)
    }

    fn terminal_reward(&self, s: &[f64]) -> f64 {
        if self.in_goal(s) {
            1.0
        } else {
            0.0
        }
    }

    fn ramp_origin(&self, state: &[f64], _current: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    fn ramp_target(&self, origin: &[f64], action: &[f64]) -> Vec<f64> {
        origin
            .iter()
            .zip(self.clamp_action(action))
            .map(|(o, a)| o + a)
            .collect()
    }

    fn actuator_position(&self, state: &[f64], _value: &[f64]) -> Vec<f64> {
        state.to_vec()
    }

    fn horizon(&self) -> usize {
        self.params.horizon
    }
}
