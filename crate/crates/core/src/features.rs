//! Concurrent-knowledge features appended to the task observation.
//!
//! Layout, in order: base observation, vector-to-go, previous action,
//! normalized `t_AS`, stacked past observations (most recent first), stacked
//! past actions (most recent first). Disabled features take no space.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::envs::ConcurrentEnv;
use crate::error::{ensure, Result};
use crate::sim::ActionTrajectory;

pub const MAX_STACK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub use_vtg: bool,
    pub use_prev_action: bool,
    pub use_t_as: bool,
    pub n_stack_states: usize,
    pub n_stack_actions: usize,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.n_stack_states <= MAX_STACK && self.n_stack_actions <= MAX_STACK,
            "frame stacks hold at most {MAX_STACK} entries"
        );
        Ok(())
    }

    pub fn dim(&self, base_dim: usize, action_dim: usize) -> usize {
        base_dim
            + action_dim * (self.use_vtg as usize + self.use_prev_action as usize)
            + self.use_t_as as usize
            + base_dim * self.n_stack_states
            + action_dim * self.n_stack_actions
    }

    /// Short label for the feature arm, e.g. `vtg+prev_action`.
    pub fn arm(&self) -> String {
        let mut parts = Vec::new();
        if self.use_vtg {
            parts.push("vtg".to_string());
        }
        if self.use_prev_action {
            parts.push("prev_action".to_string());
        }
        if self.use_t_as {
            parts.push("t_as".to_string());
        }
        if self.n_stack_states > 0 || self.n_stack_actions > 0 {
            parts.push(format!(
                "stack{}x{}",
                self.n_stack_states, self.n_stack_actions
            ));
        }
        if parts.is_empty() {
            "none".to_string()
        } else {
            parts.join("+")
        }
    }
}

/// Remaining part of `prev` at `capture_time`: `target − value(t)`, zero once
/// the ramp has finished.
pub fn compute_vtg(prev: &ActionTrajectory, capture_time: f64) -> Result<Vec<f64>> {
    let value = prev.value_at(capture_time)?;
    Ok(prev
        .target_value
        .iter()
        .zip(&value)
        .map(|(g, v)| g - v)
        .collect())
}

/// Maps `t_as` into `[0, 1]` using known latency bounds; values outside the
/// bounds are clamped with a warning.
pub fn normalize_t_as(t_as: f64, min: f64, max: f64) -> Result<f64> {
    ensure!(
        min < max,
        "latency bounds must satisfy min < max, got [{min}, {max}]"
    );
    let x = (t_as - min) / (max - min);
    if !(0.0..=1.0).contains(&x) {
        log::warn!("t_AS {t_as} outside bounds [{min}, {max}]; clamping");
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Per-environment register holding the frame stacks.
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    config: FeatureConfig,
    base_dim: usize,
    action_dim: usize,
    latency_bounds: (f64, f64),
    states: VecDeque<Vec<f64>>,
    actions: VecDeque<Vec<f64>>,
}

impl FeatureBuilder {
    pub fn new(
        config: FeatureConfig,
        base_dim: usize,
        action_dim: usize,
        latency_bounds: (f64, f64),
    ) -> Result<Self> {
        config.validate()?;
        ensure!(
            latency_bounds.0 < latency_bounds.1,
            "latency bounds must satisfy min < max"
        );
        Ok(FeatureBuilder {
            config,
            base_dim,
            action_dim,
            latency_bounds,
            states: VecDeque::with_capacity(MAX_STACK),
            actions: VecDeque::with_capacity(MAX_STACK),
        })
    }

    /// Builder for `env`, with `t_AS` normalized against `[0, H]`.
    pub fn for_env(config: FeatureConfig, env: &ConcurrentEnv) -> Result<Self> {
        FeatureBuilder::new(
            config,
            env.task().observation_dim(),
            env.task().action_dim(),
            (0.0, env.config().sampling_period),
        )
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim(self.base_dim, self.action_dim)
    }

    pub fn reset(&mut self) {
        self.states.clear();
        self.actions.clear();
    }

    /// Records the observation an action was chosen from and the action.
    pub fn push(&mut self, observation: &[f64], action: &[f64]) {
        if self.config.n_stack_states > 0 {
            if self.states.len() == self.config.n_stack_states {
                self.states.pop_back();
            }
            self.states.push_front(observation.to_vec());
        }
        if self.config.n_stack_actions > 0 {
            if self.actions.len() == self.config.n_stack_actions {
                self.actions.pop_back();
            }
            self.actions.push_front(action.to_vec());
        }
    }

    /// Flattened feature vector. Disabled inputs may be empty slices.
    pub fn assemble(
        &self,
        base: &[f64],
        vtg: &[f64],
        prev_action: &[f64],
        t_as: f64,
    ) -> Result<Vec<f64>> {
        ensure!(
            base.len() == self.base_dim,
            "base observation has {} dims, expected {}",
            base.len(),
            self.base_dim
        );
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(base);
        if self.config.use_vtg {
            ensure!(
                vtg.len() == self.action_dim,
                "vtg has {} dims, expected {}",
                vtg.len(),
                self.action_dim
            );
            out.extend_from_slice(vtg);
        }
        if self.config.use_prev_action {
            ensure!(
                prev_action.len() == self.action_dim,
                "previous action has {} dims, expected {}",
                prev_action.len(),
                self.action_dim
            );
            out.extend_from_slice(prev_action);
        }
        if self.config.use_t_as {
            out.push(normalize_t_as(
                t_as,
                self.latency_bounds.0,
                self.latency_bounds.1,
            )?);
        }
        for i in 0..self.config.n_stack_states {
            match self.states.get(i) {
                Some(s) => out.extend_from_slice(s),
                None => out.extend(std::iter::repeat_n(0.0, self.base_dim)),
            }
        }
        for i in 0..self.config.n_stack_actions {
            match self.actions.get(i) {
                Some(a) => out.extend_from_slice(a),
                None => out.extend(std::iter::repeat_n(0.0, self.action_dim)),
            }
        }
        debug_assert_eq!(out.len(), self.dim());
        Ok(out)
    }

    /// Features for the environment's current capture. VTG is read from the
    /// simulator's own ramp registers.
    pub fn observe(&self, env: &ConcurrentEnv) -> Result<Vec<f64>> {
        let vtg = if self.config.use_vtg {
            compute_vtg(env.pending_trajectory(), env.now())?
        } else {
            Vec::new()
        };
        self.assemble(
            &env.observation(),
            &vtg,
            env.prev_action(),
            env.effective_latency(),
        )
    }
}
