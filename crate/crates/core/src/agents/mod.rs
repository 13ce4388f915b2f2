//! Value-based learners: an MLP Q-network with hand-written backpropagation,
//! replay, CEM action search, DQN and CEM-based Q-learning.

mod cem;
pub mod checkpoint;
mod grid;
mod mlp;
mod replay;
mod train;

pub use cem::{cem_argmax, cem_maximize, CemConfig, CemResult};
pub use grid::ActionGrid;
pub use mlp::{ForwardCache, Mlp};
pub use replay::ReplayBuffer;
pub use train::{
    argmax, cem_ql_train, dqn_train, evaluate, tail_mean, td_target, DiscountMode, EpisodeStats,
    EvalMetrics, Experience, QPolicy, TrainConfig, TrainOutcome,
};
