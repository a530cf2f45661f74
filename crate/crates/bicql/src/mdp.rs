//! Finite MDPs and exact soft-RL primitives.
//!
//! Everything here is tabular: states and actions are dense indices, Q and
//! reward tables are dense |S|x|A| matrices, and the soft (maximum-entropy)
//! Bellman operator uses log-sum-exp where classical value iteration uses max.
//! All functions are pure; none of them sample.

use nalgebra::{DMatrix, DVector};

use crate::error::{BicqlError, Result};

/// Q-values, one row per state, one column per action.
pub type QTable = DMatrix<f64>;
/// Rewards r(s, a), same layout as [`QTable`].
pub type RewardTable = DMatrix<f64>;
/// Stochastic policy pi(a|s); each row is a probability distribution.
pub type PolicyTable = DMatrix<f64>;

/// Tolerance used when validating probability distributions.
pub const DIST_TOL: f64 = 1e-9;
/// Default sup-norm tolerance for soft value iteration.
pub const DEFAULT_VI_TOL: f64 = 1e-10;
/// Default iteration cap for soft value iteration.
pub const DEFAULT_VI_MAX_ITERS: usize = 200_000;
/// Default tolerance for greedy-set membership.
pub const DEFAULT_TIE_TOL: f64 = 1e-6;

/// A finite MDP: transition kernel, initial state distribution and discount.
///
/// Transitions are stored as one row-stochastic |S|x|S| matrix per action, so
/// `transitions()[a][(s, s2)]` is P(s2 | s, a).
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    transitions: Vec<DMatrix<f64>>,
    initial_dist: DVector<f64>,
    discount: f64,
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(BicqlError::invalid_input(format!(
            "{what}: negative or non-finite probability"
        )));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL {
        return Err(BicqlError::invalid_input(format!(
            "{what}: probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

impl FiniteMdp {
    /// Builds an MDP, validating that every transition row and the initial
    /// distribution are probability vectors and that the discount lies in (0, 1).
    pub fn new(
        transitions: Vec<DMatrix<f64>>,
        initial_dist: DVector<f64>,
        discount: f64,
    ) -> Result<Self> {
        if transitions.is_empty() {
            return Err(BicqlError::invalid_input("mdp needs at least one action"));
        }
        let n_states = transitions[0].nrows();
        if n_states == 0 {
            return Err(BicqlError::invalid_input("mdp needs at least one state"));
        }
        for (a, m) in transitions.iter().enumerate() {
            if m.nrows() != n_states || m.ncols() != n_states {
                return Err(BicqlError::invalid_input(format!(
                    "transition matrix for action {a} is {}x{}, expected {n_states}x{n_states}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            for s in 0..n_states {
                let row: Vec<f64> = m.row(s).iter().copied().collect();
                check_distribution(&row, &format!("transitions[{s}][{a}]"))?;
            }
        }
        if initial_dist.len() != n_states {
            return Err(BicqlError::invalid_input(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial_dist.len()
            )));
        }
        check_distribution(initial_dist.as_slice(), "initial_dist")?;
        if !(discount > 0.0 && discount < 1.0) {
            return Err(BicqlError::invalid_input(format!(
                "discount must lie in (0, 1), got {discount}"
            )));
        }
        Ok(FiniteMdp {
            transitions,
            initial_dist,
            discount,
        })
    }

    pub fn n_states(&self) -> usize {
        self.transitions[0].nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.len()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &DVector<f64> {
        &self.initial_dist
    }

    /// P(s2 | s, a).
    pub fn prob(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transitions[a][(s, s2)]
    }

    /// The |S|x|S| row-stochastic matrix of action `a`.
    pub fn action_matrix(&self, a: usize) -> &DMatrix<f64> {
        &self.transitions[a]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_states(), self.n_actions())
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Soft state value of one Q-row: log sum_a exp(q[a]), computed max-shifted so
/// that rows with large magnitudes neither overflow nor underflow.
pub fn soft_value(q_row: &[f64]) -> Result<f64> {
    if q_row.is_empty() {
        return Err(BicqlError::invalid_input("soft_value: empty row"));
    }
    Ok(log_sum_exp(q_row))
}

/// Soft value of every state: v[s] = log sum_a exp(q[(s, a)]).
pub fn soft_values(q: &QTable) -> DVector<f64> {
    DVector::from_fn(q.nrows(), |s, _| {
        let row: Vec<f64> = q.row(s).iter().copied().collect();
        log_sum_exp(&row)
    })
}

/// Boltzmann policy induced by a Q-table: pi(a|s) = exp(q(s,a)) / sum_a' exp(q(s,a')).
///
/// Temperature is fixed at 1; rescale Q beforehand for other temperatures.
pub fn boltzmann_policy(q: &QTable) -> PolicyTable {
    let mut probs = PolicyTable::zeros(q.nrows(), q.ncols());
    for s in 0..q.nrows() {
        let max = q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut norm = 0.0;
        for a in 0..q.ncols() {
            let w = (q[(s, a)] - max).exp();
            probs[(s, a)] = w;
            norm += w;
        }
        for a in 0..q.ncols() {
            probs[(s, a)] /= norm;
        }
    }
    probs
}

/// One application of the soft Bellman operator:
/// T(Q)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) * logsumexp(Q(s',.)).
pub fn soft_bellman_backup(mdp: &FiniteMdp, reward: &RewardTable, q: &QTable) -> QTable {
    let v = soft_values(q);
    let mut out = QTable::zeros(q.nrows(), q.ncols());
    for a in 0..mdp.n_actions() {
        let expected_v = mdp.action_matrix(a) * &v;
        for s in 0..mdp.n_states() {
            out[(s, a)] = reward[(s, a)] + mdp.discount() * expected_v[s];
        }
    }
    out
}

/// Iterates the soft Bellman operator from Q = 0 until the sup-norm step size
/// drops to `tol`. The operator is a gamma-contraction in sup norm, so the
/// returned table satisfies ||Q - T(Q)||_inf <= gamma * tol <= tol.
pub fn soft_value_iteration(
    mdp: &FiniteMdp,
    reward: &RewardTable,
    tol: f64,
    max_iters: usize,
) -> Result<QTable> {
    if !(tol > 0.0) {
        return Err(BicqlError::invalid_input(format!(
            "soft_value_iteration: tol must be positive, got {tol}"
        )));
    }
    if reward.nrows() != mdp.n_states() || reward.ncols() != mdp.n_actions() {
        return Err(BicqlError::invalid_input(format!(
            "reward table is {}x{}, expected {}x{}",
            reward.nrows(),
            reward.ncols(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let mut q = QTable::zeros(mdp.n_states(), mdp.n_actions());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = soft_bellman_backup(mdp, reward, &q);
        residual = (&next - &q).amax();
        q = next;
        if residual <= tol {
            return Ok(q);
        }
    }
    Err(BicqlError::NoConvergence {
        iters: max_iters,
        residual,
    })
}

fn check_policy(policy: &PolicyTable, n_states: usize, n_actions: usize) -> Result<()> {
    if policy.nrows() != n_states || policy.ncols() != n_actions {
        return Err(BicqlError::invalid_input(format!(
            "policy table is {}x{}, expected {n_states}x{n_actions}",
            policy.nrows(),
            policy.ncols()
        )));
    }
    for s in 0..n_states {
        let row: Vec<f64> = policy.row(s).iter().copied().collect();
        check_distribution(&row, &format!("policy row {s}"))?;
    }
    Ok(())
}

/// Exact expected discounted return of a stochastic policy:
/// J = rho^T (I - gamma P_pi)^{-1} r_pi, solved as a dense linear system.
///
/// No sampling is involved; the solve residual is checked against 1e-8.
pub fn exact_policy_return(
    mdp: &FiniteMdp,
    reward: &RewardTable,
    policy: &PolicyTable,
) -> Result<f64> {
    let n = mdp.n_states();
    check_policy(policy, n, mdp.n_actions())?;

    let mut p_pi = DMatrix::<f64>::zeros(n, n);
    let mut r_pi = DVector::<f64>::zeros(n);
    for a in 0..mdp.n_actions() {
        let pa = mdp.action_matrix(a);
        for s in 0..n {
            let w = policy[(s, a)];
            if w == 0.0 {
                continue;
            }
            r_pi[s] += w * reward[(s, a)];
            for s2 in 0..n {
                p_pi[(s, s2)] += w * pa[(s, s2)];
            }
        }
    }

    let system = DMatrix::<f64>::identity(n, n) - mdp.discount() * &p_pi;
    let values = system
        .clone()
        .lu()
        .solve(&r_pi)
        .ok_or(BicqlError::LinearSolve {
            residual: f64::INFINITY,
        })?;
    let residual = (&system * &values - &r_pi).amax();
    if residual > 1e-8 {
        return Err(BicqlError::LinearSolve { residual });
    }
    Ok(mdp.initial_dist().dot(&values))
}

/// All action indices within `tie_tol` of the row maximum.
pub fn greedy_action_set(q_row: &[f64], tie_tol: f64) -> Vec<usize> {
    assert!(tie_tol >= 0.0, "tie_tol must be non-negative");
    let max = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    q_row
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= max - tie_tol)
        .map(|(i, _)| i)
        .collect()
}

/// The uniform policy over `n_actions` at every state.
pub fn uniform_policy(n_states: usize, n_actions: usize) -> PolicyTable {
    PolicyTable::from_element(n_states, n_actions, 1.0 / n_actions as f64)
}

/// Mixes a policy with the uniform policy:
/// out(a|s) = (1 - w) * pi(a|s) + w / |A|, with w = `uniform_weight`.
pub fn mix_with_uniform(policy: &PolicyTable, uniform_weight: f64) -> PolicyTable {
    assert!(
        (0.0..=1.0).contains(&uniform_weight),
        "uniform_weight must lie in [0, 1]"
    );
    let u = uniform_weight / policy.ncols() as f64;
    policy.map(|p| (1.0 - uniform_weight) * p + u)
}
