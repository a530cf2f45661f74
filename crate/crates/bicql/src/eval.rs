//! Scoring learned rewards and policies against the ground truth: exact
//! returns, expert-optimality checks and reward-recovery statistics.
//!
//! Policies are extracted from a learned reward by exact soft value iteration
//! (not by RL training), and returns are always measured under the TRUE
//! reward, so every number here is sampling-free.

use crate::dataset::{ExpertDataset, TransitionDataset};
use crate::error::Result;
use crate::mdp::{
    boltzmann_policy, exact_policy_return, greedy_action_set, soft_value_iteration, FiniteMdp,
    PolicyTable, QTable, RewardTable, DEFAULT_VI_MAX_ITERS, DEFAULT_VI_TOL,
};

/// Evaluation summary for one trained run.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub learned_return: f64,
    pub expert_return: f64,
    pub bc_return: Option<f64>,
    /// learned_return / expert_return; absent when the expert return is zero.
    pub normalized_score: Option<f64>,
    pub expert_greedy_fraction: f64,
    /// Pearson correlation between true and learned rewards over
    /// dataset-covered cells; absent below 2 cells or at zero variance.
    pub reward_pearson: Option<f64>,
    pub reward_covered_cells: usize,
    /// First outer iteration whose intermediate reward already scores at
    /// least 90% of the final normalized score; needs reward snapshots.
    pub convergence_outer_iters: Option<usize>,
}

/// Solves the learned reward exactly and scores the induced Boltzmann policy
/// under the true reward.
pub fn evaluate_learned_reward(
    mdp: &FiniteMdp,
    true_reward: &RewardTable,
    learned_reward: &RewardTable,
) -> Result<(PolicyTable, f64)> {
    let q = soft_value_iteration(mdp, learned_reward, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITERS)?;
    let policy = boltzmann_policy(&q);
    let learned_return = exact_policy_return(mdp, true_reward, &policy)?;
    Ok((policy, learned_return))
}

/// Most frequent expert action per visited state, ties broken toward the
/// lowest action index.
pub fn expert_modal_actions(expert: &ExpertDataset, n_states: usize, n_actions: usize) -> Vec<Option<usize>> {
    let mut counts = vec![0_usize; n_states * n_actions];
    for r in &expert.records {
        counts[r.state * n_actions + r.action] += 1;
    }
    (0..n_states)
        .map(|s| {
            let row = &counts[s * n_actions..(s + 1) * n_actions];
            let best = row.iter().copied().max().unwrap_or(0);
            if best == 0 {
                None
            } else {
                row.iter().position(|c| *c == best)
            }
        })
        .collect()
}

/// Fraction of expert-visited states whose modal expert action lies in the
/// greedy set of the learned Q-table at tolerance `tie_tol`.
pub fn expert_optimality_check(q_learned: &QTable, expert: &ExpertDataset, tie_tol: f64) -> f64 {
    let modal = expert_modal_actions(expert, q_learned.nrows(), q_learned.ncols());
    let visited = expert.visited_states();
    if visited.is_empty() {
        return 0.0;
    }
    let mut hits = 0_usize;
    for &s in &visited {
        let action = modal[s].expect("visited state has a modal action");
        let row: Vec<f64> = q_learned.row(s).iter().copied().collect();
        if greedy_action_set(&row, tie_tol).contains(&action) {
            hits += 1;
        }
    }
    hits as f64 / visited.len() as f64
}

/// Pearson correlation between true and learned rewards over the distinct
/// (s, a) cells present in the dataset. Returns (None, covered) when fewer
/// than 2 cells are covered or either side has zero variance.
pub fn reward_recovery_stats(
    true_reward: &RewardTable,
    learned_reward: &RewardTable,
    dataset: &TransitionDataset,
) -> (Option<f64>, usize) {
    let mut cells: Vec<(usize, usize)> = dataset
        .records
        .iter()
        .map(|t| (t.state, t.action))
        .collect();
    cells.sort_unstable();
    cells.dedup();
    let n = cells.len();
    if n < 2 {
        return (None, n);
    }
    let xs: Vec<f64> = cells.iter().map(|&(s, a)| true_reward[(s, a)]).collect();
    let ys: Vec<f64> = cells.iter().map(|&(s, a)| learned_reward[(s, a)]).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mx, my) = (mean(&xs), mean(&ys));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = xs[i] - mx;
        let dy = ys[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return (None, n);
    }
    (Some(sxy / (sxx * syy).sqrt()), n)
}

/// First 1-based snapshot index whose evaluated return reaches 90% of the
/// final snapshot's return (the convergence-speed metric, re-based on outer
/// iterations). None when there are no snapshots or the final return is not
/// positive.
pub fn convergence_outer_iters(
    mdp: &FiniteMdp,
    true_reward: &RewardTable,
    snapshots: &[RewardTable],
) -> Result<Option<usize>> {
    let Some(last) = snapshots.last() else {
        return Ok(None);
    };
    let (_, final_return) = evaluate_learned_reward(mdp, true_reward, last)?;
    if final_return <= 0.0 {
        return Ok(None);
    }
    let threshold = 0.9 * final_return;
    for (i, snapshot) in snapshots.iter().enumerate() {
        let (_, ret) = evaluate_learned_reward(mdp, true_reward, snapshot)?;
        if ret >= threshold {
            return Ok(Some(i + 1));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ExpertRecord, Transition};
    use crate::env::{build_random_mdp, make_expert};

    #[test]
    fn true_reward_scores_exactly_one() {
        let (mdp, reward) = build_random_mdp(6, 3, 2, 1.0, 0.9, 31).unwrap();
        let expert = make_expert(&mdp, &reward).unwrap();
        let expert_return = exact_policy_return(&mdp, &reward, &expert.policy()).unwrap();
        let (_, learned_return) = evaluate_learned_reward(&mdp, &reward, &reward).unwrap();
        assert_eq!(learned_return, expert_return);
    }

    #[test]
    fn constant_shift_leaves_policy_unchanged() {
        // Soft value iteration maps r + c to Q + c/(1-gamma); the Boltzmann
        // policy is shift invariant, so the returns must agree to solver
        // precision.
        for seed in [1_u64, 2, 3] {
            let (mdp, reward) = build_random_mdp(6, 3, 2, 1.0, 0.9, seed).unwrap();
            let shifted = reward.map(|r| r + 7.3);
            let (p1, r1) = evaluate_learned_reward(&mdp, &reward, &reward).unwrap();
            let (p2, r2) = evaluate_learned_reward(&mdp, &reward, &shifted).unwrap();
            assert!((p1 - p2).amax() < 1e-9);
            assert!((r1 - r2).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_reward_gives_uniform_policy() {
        let (mdp, reward) = build_random_mdp(5, 4, 2, 1.0, 0.9, 8).unwrap();
        let zero = RewardTable::zeros(5, 4);
        let (policy, ret) = evaluate_learned_reward(&mdp, &reward, &zero).unwrap();
        for p in policy.iter() {
            assert!((p - 0.25).abs() < 1e-9);
        }
        let uniform_return =
            exact_policy_return(&mdp, &reward, &crate::mdp::uniform_policy(5, 4)).unwrap();
        assert!((ret - uniform_return).abs() < 1e-9);
    }

    fn expert_of(records: &[(usize, usize)]) -> ExpertDataset {
        ExpertDataset {
            records: records
                .iter()
                .map(|&(s, a)| ExpertRecord { state: s, action: a, next_state: None })
                .collect(),
        }
    }

    #[test]
    fn optimality_check_full_agreement() {
        let mut q = QTable::zeros(2, 2);
        q[(0, 1)] = 1.0;
        q[(1, 0)] = 1.0;
        let frac = expert_optimality_check(&q, &expert_of(&[(0, 1), (1, 0), (0, 1)]), 1e-6);
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn optimality_check_degenerate_ties_count() {
        // All-zero Q: every action ties within tolerance, so the check passes
        // by definition.
        let q = QTable::zeros(2, 2);
        let frac = expert_optimality_check(&q, &expert_of(&[(0, 0), (1, 1)]), 1e-6);
        assert_eq!(frac, 1.0);
    }

    #[test]
    fn optimality_check_anti_aligned_is_zero() {
        let mut q = QTable::zeros(2, 2);
        q[(0, 0)] = 1.0; // expert takes action 1, strictly minimal
        q[(1, 1)] = 1.0; // expert takes action 0, strictly minimal
        let frac = expert_optimality_check(&q, &expert_of(&[(0, 1), (1, 0)]), 1e-3);
        assert_eq!(frac, 0.0);
    }

    #[test]
    fn modal_action_breaks_ties_toward_low_index() {
        let expert = expert_of(&[(0, 2), (0, 1), (0, 1), (0, 2)]);
        let modal = expert_modal_actions(&expert, 1, 3);
        assert_eq!(modal[0], Some(1));
    }

    fn dataset_of(cells: &[(usize, usize)]) -> TransitionDataset {
        TransitionDataset {
            records: cells
                .iter()
                .map(|&(s, a)| Transition { state: s, action: a, next_state: 0 })
                .collect(),
        }
    }

    #[test]
    fn pearson_identity_and_affine() {
        let (mdp, reward) = build_random_mdp(5, 3, 2, 1.0, 0.9, 12).unwrap();
        let _ = mdp;
        let cells: Vec<(usize, usize)> = (0..5).flat_map(|s| (0..3).map(move |a| (s, a))).collect();
        let dataset = dataset_of(&cells);

        let (p, n) = reward_recovery_stats(&reward, &reward, &dataset);
        assert_eq!(n, 15);
        assert!((p.unwrap() - 1.0).abs() < 1e-12);

        let affine = reward.map(|r| 2.5 * r + 3.0);
        let (p, _) = reward_recovery_stats(&reward, &affine, &dataset);
        assert!((p.unwrap() - 1.0).abs() < 1e-12);

        let negated = reward.map(|r| -r);
        let (p, _) = reward_recovery_stats(&reward, &negated, &dataset);
        assert!((p.unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn convergence_iteration_finds_first_snapshot_near_final() {
        use crate::env::{build_gridworld, GridworldSpec};
        let spec = GridworldSpec {
            width: 3,
            height: 3,
            goal_cells: vec![(2, 2)],
            slip_prob: 0.0,
            step_reward: -0.01,
            goal_reward: 1.0,
            discount: 0.9,
        };
        let (mdp, true_reward) = build_gridworld(&spec).unwrap();
        let snapshots = vec![
            RewardTable::zeros(9, 4),
            true_reward.map(|r| 0.5 * r),
            true_reward.clone(),
        ];
        // Derive the expected index from the evaluated returns: first
        // snapshot reaching 90% of the final snapshot's return.
        let returns: Vec<f64> = snapshots
            .iter()
            .map(|s| evaluate_learned_reward(&mdp, &true_reward, s).unwrap().1)
            .collect();
        let expected = returns
            .iter()
            .position(|r| *r >= 0.9 * returns.last().unwrap())
            .map(|i| i + 1);
        assert!(expected.is_some());
        assert!(expected.unwrap() > 1, "zero reward must not already qualify");

        let reached = convergence_outer_iters(&mdp, &true_reward, &snapshots).unwrap();
        assert_eq!(reached, expected);

        assert_eq!(
            convergence_outer_iters(&mdp, &true_reward, &[]).unwrap(),
            None
        );
    }

    #[test]
    fn pearson_undefined_cases() {
        let (_, reward) = build_random_mdp(5, 3, 2, 1.0, 0.9, 12).unwrap();
        let (p, n) = reward_recovery_stats(&reward, &reward, &dataset_of(&[(0, 0), (0, 0)]));
        assert_eq!(n, 1);
        assert!(p.is_none());

        let constant = RewardTable::from_element(5, 3, 2.0);
        let (p, n) = reward_recovery_stats(&constant, &reward, &dataset_of(&[(0, 0), (1, 1)]));
        assert_eq!(n, 2);
        assert!(p.is_none());
    }
}
