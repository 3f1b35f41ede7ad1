//! Reward-decomposed Q-learning with learned causal state masks.
//!
//! The crate trains K component Q-functions whose sum drives a global
//! greedy policy, while per-channel maskers distil the part of the state
//! each reward channel depends on. Trained bundles are scored with
//! fidelity, sparsity, orthogonality and mask-score metrics and exported as
//! per-state explanation records.

pub mod agents;
pub mod approx;
pub mod config;
pub mod distill;
pub mod envs;
pub mod explain;
pub mod metrics;
pub mod replay;
pub mod run;
