//! Lower-level optimization: conservative soft Q-learning on a tabular
//! Q-function with analytic gradients.
//!
//! The loss is the soft Bellman error
//! `1/(2B) sum_i (Q(s_i,a_i) - (r(s_i,a_i) + gamma * logsumexp Q_target(s'_i,.)))^2`
//! plus the conservative regularizer
//! `alpha/B sum_i (logsumexp Q(s_i,.) - Q(s_i,a_i))`,
//! which pushes down Q-values of actions that are rare in the dataset
//! relative to the Boltzmann policy of the current table.

use crate::dataset::{BatchSampler, Transition, TransitionDataset};
use crate::error::{BicqlError, Result};
use crate::mdp::{boltzmann_policy, soft_values, QTable, RewardTable};

/// Hyperparameters of the conservative Q-learning level.
#[derive(Debug, Clone, PartialEq)]
pub struct CqlConfig {
    /// Conservatism coefficient (alpha >= 0; 0 disables the regularizer).
    pub alpha: f64,
    /// Q-table learning rate.
    pub lr_q: f64,
    /// Target table sync period, in gradient steps.
    pub target_sync_period: usize,
    /// Gradient steps per outer iteration.
    pub k_q: usize,
    /// Mini-batch size; 0 means the full dataset every step.
    pub batch_size: usize,
    /// Sample batches with replacement (uniform i.i.d.) or without.
    pub with_replacement: bool,
}

impl Default for CqlConfig {
    fn default() -> Self {
        CqlConfig {
            alpha: 1.0,
            lr_q: 0.1,
            target_sync_period: 50,
            k_q: 500,
            batch_size: 256,
            with_replacement: true,
        }
    }
}

impl CqlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(BicqlError::invalid_input("alpha must be finite and >= 0"));
        }
        if !(self.lr_q > 0.0) {
            return Err(BicqlError::invalid_input("lr_q must be positive"));
        }
        if self.target_sync_period == 0 {
            return Err(BicqlError::invalid_input("target_sync_period must be positive"));
        }
        Ok(())
    }
}

/// Mutable learner state: the Q-table, its lagged target copy, and the number
/// of gradient steps taken. The target is never ahead of the table.
#[derive(Debug, Clone, PartialEq)]
pub struct QLearnerState {
    pub q: QTable,
    pub q_target: QTable,
    pub step_count: usize,
}

impl QLearnerState {
    pub fn new(q: QTable) -> Self {
        let q_target = q.clone();
        QLearnerState {
            q,
            q_target,
            step_count: 0,
        }
    }
}

/// Soft Bellman error and its gradient with respect to `q` (the target table
/// is treated as a constant). The gradient is dense with support on the batch
/// cells only.
pub fn bellman_error_loss(
    q: &QTable,
    q_target: &QTable,
    reward: &RewardTable,
    batch: &[Transition],
    gamma: f64,
) -> (f64, QTable) {
    assert!(!batch.is_empty(), "bellman_error_loss: empty batch");
    let inv_b = 1.0 / batch.len() as f64;
    let v_target = soft_values(q_target);
    let mut loss = 0.0;
    let mut grad = QTable::zeros(q.nrows(), q.ncols());
    for t in batch {
        let y = reward[(t.state, t.action)] + gamma * v_target[t.next_state];
        let diff = q[(t.state, t.action)] - y;
        loss += 0.5 * inv_b * diff * diff;
        grad[(t.state, t.action)] += inv_b * diff;
    }
    (loss, grad)
}

/// Conservative regularizer and its gradient: for every batch record the
/// Boltzmann row of the current table is pushed down and the dataset action
/// pushed up, scaled by alpha / B.
pub fn cql_regularizer(q: &QTable, batch: &[Transition], alpha: f64) -> (f64, QTable) {
    assert!(!batch.is_empty(), "cql_regularizer: empty batch");
    let scale = alpha / batch.len() as f64;
    let v = soft_values(q);
    let policy = boltzmann_policy(q);
    let mut loss = 0.0;
    let mut grad = QTable::zeros(q.nrows(), q.ncols());
    for t in batch {
        loss += scale * (v[t.state] - q[(t.state, t.action)]);
        for a in 0..q.ncols() {
            grad[(t.state, a)] += scale * policy[(t.state, a)];
        }
        grad[(t.state, t.action)] -= scale;
    }
    (loss, grad)
}

/// One gradient-descent step on the combined loss; increments the step count
/// and syncs the target table every `target_sync_period` steps.
///
/// Returns the (bellman, cql) losses evaluated at the pre-step table.
pub fn q_step(
    state: &mut QLearnerState,
    reward: &RewardTable,
    batch: &[Transition],
    config: &CqlConfig,
    gamma: f64,
) -> Result<(f64, f64)> {
    let (loss_be, grad_be) = bellman_error_loss(&state.q, &state.q_target, reward, batch, gamma);
    let (loss_cql, grad_cql) = cql_regularizer(&state.q, batch, config.alpha);
    let total = loss_be + loss_cql;
    if !total.is_finite() {
        return Err(BicqlError::Divergence {
            step: state.step_count,
        });
    }
    state.q -= config.lr_q * (grad_be + grad_cql);
    state.step_count += 1;
    if state.step_count % config.target_sync_period == 0 {
        state.q_target = state.q.clone();
    }
    Ok((loss_be, loss_cql))
}

/// Runs `k_q` gradient steps over mini-batches drawn from `dataset`, mutating
/// the warm-started learner state in place.
///
/// Returns the mean (bellman, cql) losses over the executed steps, or (0, 0)
/// when `k_q` is zero.
pub fn solve_lower_level(
    reward: &RewardTable,
    dataset: &TransitionDataset,
    config: &CqlConfig,
    gamma: f64,
    state: &mut QLearnerState,
    sampler: &mut BatchSampler,
) -> Result<(f64, f64)> {
    if dataset.is_empty() {
        return Err(BicqlError::invalid_state(
            "cannot train on an empty transition dataset",
        ));
    }
    let mut sum_be = 0.0;
    let mut sum_cql = 0.0;
    for _ in 0..config.k_q {
        let batch = sampler.next_batch(&dataset.records)?;
        let (be, cql) = q_step(state, reward, &batch, config, gamma)?;
        sum_be += be;
        sum_cql += cql;
    }
    if config.k_q == 0 {
        return Ok((0.0, 0.0));
    }
    let k = config.k_q as f64;
    Ok((sum_be / k, sum_cql / k))
}

/// Like [`solve_lower_level`] but starting from a fresh learner state built
/// around `init` (target = init, step count 0).
pub fn solve_lower_level_from(
    reward: &RewardTable,
    dataset: &TransitionDataset,
    config: &CqlConfig,
    gamma: f64,
    init: QTable,
    sampler: &mut BatchSampler,
) -> Result<QLearnerState> {
    let mut state = QLearnerState::new(init);
    solve_lower_level(reward, dataset, config, gamma, &mut state, sampler)?;
    Ok(state)
}
