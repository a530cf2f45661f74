//! Upper-level optimization: soft-advantage regression for the reward table,
//! plus the expert log-likelihood monitor.
//!
//! With the Q-table held fixed, the expert log-likelihood has no reward
//! gradient at all, so the reward is instead regressed onto the soft advantage
//! `Q(s,a) - gamma * logsumexp Q(s',.)`, which equals the generating reward at
//! the soft Bellman fixed point.

use crate::dataset::{ExpertDataset, Transition};
use crate::error::{BicqlError, Result};
use crate::mdp::{soft_values, QTable, RewardTable};

/// Which dataset feeds the reward regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardSource {
    /// Regress on expert demonstrations (requires next states).
    ExpertOnly,
    /// Regress on the full offline transition dataset.
    FullDataset,
}

/// Hyperparameters of the reward regression level.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub lr_r: f64,
    /// Gradient steps per outer iteration.
    pub k_r: usize,
    /// Mini-batch size; 0 means the full dataset every step.
    pub batch_size: usize,
    pub with_replacement: bool,
    pub source: RewardSource,
    /// When set, reward entries are clamped to [-r_max, r_max] after each step.
    pub r_max: Option<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            lr_r: 0.5,
            k_r: 50,
            batch_size: 256,
            with_replacement: true,
            source: RewardSource::ExpertOnly,
            r_max: None,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_r > 0.0) {
            return Err(BicqlError::invalid_input("lr_r must be positive"));
        }
        if self.k_r == 0 {
            return Err(BicqlError::invalid_input("k_r must be at least 1"));
        }
        if let Some(r_max) = self.r_max {
            if !(r_max > 0.0) {
                return Err(BicqlError::invalid_input("r_max must be positive"));
            }
        }
        Ok(())
    }
}

/// Regression target for one record: q(s,a) - gamma * logsumexp q(s',.).
pub fn soft_advantage_target(q: &QTable, record: &Transition, gamma: f64) -> f64 {
    let row: Vec<f64> = q.row(record.next_state).iter().copied().collect();
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let v_next = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    q[(record.state, record.action)] - gamma * v_next
}

/// Mean squared gap between the reward table and the soft-advantage targets,
/// with its gradient (dense, supported on batch cells).
pub fn reward_regression_loss(
    reward: &RewardTable,
    q: &QTable,
    batch: &[Transition],
    gamma: f64,
) -> (f64, RewardTable) {
    assert!(!batch.is_empty(), "reward_regression_loss: empty batch");
    let inv_b = 1.0 / batch.len() as f64;
    let v = soft_values(q);
    let mut loss = 0.0;
    let mut grad = RewardTable::zeros(reward.nrows(), reward.ncols());
    for t in batch {
        let target = q[(t.state, t.action)] - gamma * v[t.next_state];
        let diff = reward[(t.state, t.action)] - target;
        loss += inv_b * diff * diff;
        grad[(t.state, t.action)] += 2.0 * inv_b * diff;
    }
    (loss, grad)
}

/// One descent step on the regression loss; clamps to [-r_max, r_max] when
/// bounded-reward mode is on. Returns the pre-step loss.
pub fn reward_step(
    reward: &mut RewardTable,
    q: &QTable,
    batch: &[Transition],
    config: &RewardConfig,
    gamma: f64,
) -> Result<f64> {
    let (loss, grad) = reward_regression_loss(reward, q, batch, gamma);
    if !loss.is_finite() {
        return Err(BicqlError::Divergence { step: 0 });
    }
    *reward -= config.lr_r * grad;
    if let Some(r_max) = config.r_max {
        for v in reward.iter_mut() {
            *v = v.clamp(-r_max, r_max);
        }
    }
    Ok(loss)
}

/// Mean expert log-likelihood under the Boltzmann policy of `q`:
/// mean over records of q(s,a) - logsumexp q(s,.). Always <= 0.
///
/// Monitoring metric only: with q fixed it carries no reward gradient.
pub fn expert_log_likelihood(q: &QTable, expert: &ExpertDataset) -> Result<f64> {
    if expert.is_empty() {
        return Err(BicqlError::invalid_input(
            "expert_log_likelihood: empty expert dataset",
        ));
    }
    let v = soft_values(q);
    let sum: f64 = expert
        .records
        .iter()
        .map(|r| q[(r.state, r.action)] - v[r.state])
        .sum();
    Ok(sum / expert.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ExpertRecord;

    fn record(s: usize, a: usize, s2: usize) -> Transition {
        Transition {
            state: s,
            action: a,
            next_state: s2,
        }
    }

    #[test]
    fn target_with_zero_discount_is_q_entry() {
        let q = QTable::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let t = soft_advantage_target(&q, &record(1, 0, 0), 0.0);
        assert_eq!(t, 3.0);
    }

    #[test]
    fn target_of_zero_table_is_discounted_log_n() {
        let q = QTable::zeros(2, 2);
        let t = soft_advantage_target(&q, &record(0, 1, 1), 0.7);
        assert!((t + 0.7 * 2.0_f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn regression_loss_zero_when_reward_matches_targets() {
        let q = QTable::from_row_slice(1, 2, &[0.5, -0.5]);
        let batch = vec![record(0, 0, 0), record(0, 1, 0)];
        let gamma = 0.9;
        let mut reward = RewardTable::zeros(1, 2);
        for t in &batch {
            reward[(t.state, t.action)] = soft_advantage_target(&q, t, gamma);
        }
        let (loss, grad) = reward_regression_loss(&reward, &q, &batch, gamma);
        assert!(loss.abs() < 1e-30);
        assert!(grad.amax() < 1e-15);
    }

    #[test]
    fn regression_loss_single_record_hand_arithmetic() {
        // reward entry 0, target 1: loss 1, gradient -2 at the touched cell.
        let q = QTable::from_row_slice(1, 1, &[1.0]);
        let reward = RewardTable::zeros(1, 1);
        let (loss, grad) = reward_regression_loss(&reward, &q, &[record(0, 0, 0)], 0.0);
        assert!((loss - 1.0).abs() < 1e-15);
        assert!((grad[(0, 0)] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn regression_gradient_matches_finite_differences() {
        let q = QTable::from_row_slice(2, 2, &[0.3, -0.7, 1.2, 0.4]);
        let reward = RewardTable::from_row_slice(2, 2, &[0.1, 0.0, -0.2, 0.6]);
        let batch = vec![record(0, 0, 1), record(1, 1, 0), record(0, 0, 0)];
        let gamma = 0.95;
        let h = 1e-6;
        let (_, grad) = reward_regression_loss(&reward, &q, &batch, gamma);
        for s in 0..2 {
            for a in 0..2 {
                let mut plus = reward.clone();
                plus[(s, a)] += h;
                let mut minus = reward.clone();
                minus[(s, a)] -= h;
                let fd = (reward_regression_loss(&plus, &q, &batch, gamma).0
                    - reward_regression_loss(&minus, &q, &batch, gamma).0)
                    / (2.0 * h);
                assert!((fd - grad[(s, a)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reward_step_zero_gradient_leaves_table() {
        let q = QTable::from_row_slice(1, 1, &[5.0]);
        let gamma = 0.8;
        let target = soft_advantage_target(&q, &record(0, 0, 0), gamma);
        let mut reward = RewardTable::from_element(1, 1, target);
        let before = reward.clone();
        reward_step(&mut reward, &q, &[record(0, 0, 0)], &RewardConfig::default(), gamma).unwrap();
        assert_eq!(reward, before);
    }

    #[test]
    fn reward_step_converges_to_per_cell_target_mean() {
        // Full-coverage batch with one record per cell: tabular least squares
        // is exactly solvable and the minimizer is the per-cell target.
        let q = QTable::from_row_slice(2, 2, &[0.3, -0.7, 1.2, 0.4]);
        let gamma = 0.9;
        let batch = vec![
            record(0, 0, 1),
            record(0, 1, 0),
            record(1, 0, 0),
            record(1, 1, 1),
        ];
        let mut reward = RewardTable::zeros(2, 2);
        let config = RewardConfig {
            lr_r: 0.5,
            ..RewardConfig::default()
        };
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            last = reward_step(&mut reward, &q, &batch, &config, gamma).unwrap();
        }
        assert!(last < 1e-8, "loss stayed at {last}");
        for t in &batch {
            let target = soft_advantage_target(&q, t, gamma);
            assert!((reward[(t.state, t.action)] - target).abs() < 1e-4);
        }
    }

    #[test]
    fn reward_step_clamps_in_bounded_mode() {
        let q = QTable::from_row_slice(1, 1, &[100.0]);
        let mut reward = RewardTable::zeros(1, 1);
        let config = RewardConfig {
            lr_r: 1.0,
            r_max: Some(2.0),
            ..RewardConfig::default()
        };
        for _ in 0..50 {
            reward_step(&mut reward, &q, &[record(0, 0, 0)], &config, 0.0).unwrap();
        }
        assert!(reward[(0, 0)] <= 2.0);
        assert!((reward[(0, 0)] - 2.0).abs() < 1e-12);
    }

    fn expert(records: &[(usize, usize)]) -> ExpertDataset {
        ExpertDataset {
            records: records
                .iter()
                .map(|&(s, a)| ExpertRecord {
                    state: s,
                    action: a,
                    next_state: None,
                })
                .collect(),
        }
    }

    #[test]
    fn log_likelihood_of_uniform_q() {
        let q = QTable::zeros(2, 2);
        let ll = expert_log_likelihood(&q, &expert(&[(0, 0), (1, 1), (0, 1)])).unwrap();
        assert!((ll + 2.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_saturates_near_zero() {
        let mut q = QTable::zeros(1, 2);
        q[(0, 0)] = 30.0;
        let ll = expert_log_likelihood(&q, &expert(&[(0, 0)])).unwrap();
        assert!(ll <= 0.0);
        assert!(ll > -1e-12);
    }

    #[test]
    fn log_likelihood_shift_invariant_and_non_positive() {
        let q = QTable::from_row_slice(2, 3, &[0.3, -0.7, 1.2, 0.4, 0.0, -2.0]);
        let data = expert(&[(0, 2), (1, 0), (1, 1)]);
        let ll = expert_log_likelihood(&q, &data).unwrap();
        assert!(ll <= 0.0);
        let shifted = QTable::from_fn(2, 3, |s, a| q[(s, a)] + if s == 0 { 10.0 } else { -3.0 });
        let ll2 = expert_log_likelihood(&shifted, &data).unwrap();
        assert!((ll - ll2).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_rejects_empty_dataset() {
        let q = QTable::zeros(1, 2);
        assert!(expert_log_likelihood(&q, &ExpertDataset::default()).is_err());
    }
}
