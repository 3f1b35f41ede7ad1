//! Decomposed Q-learning and the training methods built on it.
//!
//! A bundle holds K component Q-heads whose column sums pick the global
//! action. Methods differ in what the heads consume (full state or masked
//! factor), whether reward heads exist and how they are supervised, and
//! which distillation objectives shape the masks. Methods are looked up by
//! name in a [`MethodRegistry`].

mod bundle;
mod gradsuite;
mod learner;
mod methods;
mod train;

pub use bundle::{component_q, global_action, Group, GroupKind, StateView, TrainedBundle};
pub use gradsuite::{check_case, gradient_suite, GradCase, SuiteLoss};
pub use learner::{
    td_update_component, td_update_full, td_update_ground, Batch, Block, FlowLedger, Learner,
    StepLosses,
};
pub use methods::{
    Due, Method, MethodRegistry, MethodSpec, MethodTag, RewardTarget, Substrate,
};
pub use train::{evaluate, greedy_states, train, EvalReport, LogRow, TrainRun, LOG_HEADER};

use crate::approx::ApproxError;
use crate::config::ConfigError;
use crate::distill::DistillError;
use crate::envs::EnvError;
use crate::replay::ReplayError;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("{op} is not defined for method {method}")]
    WrongMethod { op: &'static str, method: MethodTag },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Distill(#[from] DistillError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}
