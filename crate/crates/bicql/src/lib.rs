//! Offline inverse reinforcement learning on finite MDPs via bi-level
//! conservative Q-learning.
//!
//! The lower level fits a conservative soft Q-table to the current reward on
//! offline transition data; the upper level regresses the reward onto the
//! soft advantage of that Q-table over expert demonstrations. Alternating the
//! two recovers a reward under which the expert is soft-optimal, without ever
//! training a policy. Exact solvers (soft value iteration, linear-system
//! policy evaluation) make every diagnostic sampling-free.

pub mod bc;
pub mod cql;
pub mod dataset;
pub mod driver;
pub mod env;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod reward;

pub use error::{BicqlError, Result};
pub use mdp::{FiniteMdp, PolicyTable, QTable, RewardTable};

// Tables in the public API are nalgebra matrices; re-export for dependents.
pub use nalgebra;
