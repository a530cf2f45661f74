//! Behavioral cloning baseline: Laplace-smoothed empirical action frequencies.

use crate::dataset::ExpertDataset;
use crate::error::{BicqlError, Result};
use crate::mdp::PolicyTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcConfig {
    /// Laplace smoothing pseudo-count.
    pub laplace_alpha: f64,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig { laplace_alpha: 0.5 }
    }
}

/// Fits pi(a|s) = (count(s,a) + alpha) / (count(s) + alpha * |A|); states the
/// expert never visited get the uniform policy.
pub fn behavioral_cloning(
    expert: &ExpertDataset,
    n_states: usize,
    n_actions: usize,
    config: &BcConfig,
) -> Result<PolicyTable> {
    if expert.is_empty() {
        return Err(BicqlError::invalid_input("behavioral cloning needs expert data"));
    }
    if config.laplace_alpha < 0.0 {
        return Err(BicqlError::invalid_input("laplace_alpha must be >= 0"));
    }
    expert.check_bounds(n_states, n_actions)?;

    let mut counts = vec![0.0_f64; n_states * n_actions];
    let mut state_counts = vec![0.0_f64; n_states];
    for r in &expert.records {
        counts[r.state * n_actions + r.action] += 1.0;
        state_counts[r.state] += 1.0;
    }

    let alpha = config.laplace_alpha;
    let uniform = 1.0 / n_actions as f64;
    let policy = PolicyTable::from_fn(n_states, n_actions, |s, a| {
        if state_counts[s] == 0.0 {
            uniform
        } else {
            (counts[s * n_actions + a] + alpha) / (state_counts[s] + alpha * n_actions as f64)
        }
    });
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ExpertRecord;

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
    fn unsmoothed_single_visit_is_deterministic() {
        let policy = behavioral_cloning(
            &expert(&[(0, 1)]),
            3,
            2,
            &BcConfig { laplace_alpha: 0.0 },
        )
        .unwrap();
        assert_eq!(policy[(0, 1)], 1.0);
        assert_eq!(policy[(0, 0)], 0.0);
        for s in 1..3 {
            assert_eq!(policy[(s, 0)], 0.5);
            assert_eq!(policy[(s, 1)], 0.5);
        }
    }

    #[test]
    fn huge_alpha_limits_to_uniform() {
        let policy = behavioral_cloning(
            &expert(&[(0, 0), (0, 0), (0, 0)]),
            1,
            2,
            &BcConfig { laplace_alpha: 1e9 },
        )
        .unwrap();
        assert!((policy[(0, 0)] - 0.5).abs() < 1e-6);
        assert!((policy[(0, 1)] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn smoothed_counts_hand_arithmetic() {
        // counts: a0 x3, a1 x1, alpha 1, |A| = 2 -> [4/6, 2/6].
        let policy = behavioral_cloning(
            &expert(&[(0, 0), (0, 0), (0, 0), (0, 1)]),
            1,
            2,
            &BcConfig { laplace_alpha: 1.0 },
        )
        .unwrap();
        assert!((policy[(0, 0)] - 4.0 / 6.0).abs() < 1e-12);
        assert!((policy[(0, 1)] - 2.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn rows_sum_to_one() {
        let policy = behavioral_cloning(
            &expert(&[(0, 0), (2, 3), (2, 1), (2, 1)]),
            4,
            4,
            &BcConfig::default(),
        )
        .unwrap();
        for s in 0..4 {
            let sum: f64 = policy.row(s).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_expert_is_rejected() {
        assert!(behavioral_cloning(&ExpertDataset::default(), 2, 2, &BcConfig::default()).is_err());
    }
}
