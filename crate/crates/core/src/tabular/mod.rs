//! Finite concurrent MDPs: Bellman operators, value iteration, Monte-Carlo
//! estimates and numerical contraction checks.

pub mod certificate;
pub mod mdp;
pub mod montecarlo;
pub mod operators;
pub mod refinement;

pub use certificate::{
    certificate_with, contraction_certificate, CertificateReport, TrialModulus,
    CONTRACTION_TOLERANCE,
};
pub use mdp::{FiniteConcurrentMdp, QTable, SpilloverMode, TabularPolicy};
pub use montecarlo::{mc_q_estimate, sufficient_horizon, McEstimate};
pub use operators::{
    backup_with, blocking_backup, concurrent_backup, evaluation_backup, policy_evaluation,
    value_iteration, Operator, ValueIteration,
};
pub use refinement::{
    fine_discretization_check, ContinuousConcurrentModel, LevelReport, RefinementReport,
};
