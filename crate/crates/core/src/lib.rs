//! Reinforcement learning for concurrent control, where the agent selects its
//! next action while the previous one is still executing.
//!
//! - [`sim`]: time model, action ramps and the fixed-step integrator.
//! - [`tabular`]: finite concurrent MDPs and their Bellman operators.
//! - [`envs`]: pendulum, cartpole and pointmass behind a concurrency wrapper.
//! - [`features`]: vector-to-go, previous action, latency and frame stacking.
//! - [`agents`]: MLP Q-networks, DQN and CEM-based Q-learning.
//! - [`harness`]: hyperparameter sweeps and robustness curves.

pub mod agents;
pub mod envs;
pub mod error;
pub mod features;
pub mod harness;
pub mod sim;
pub mod tabular;

pub use error::{Error, Result};
