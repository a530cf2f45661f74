//! Benchmark environments: gridworlds, random MDPs, ground-truth rewards and
//! soft-optimal experts.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BicqlError, Result};
use crate::mdp::{
    boltzmann_policy, soft_bellman_backup, soft_value_iteration, FiniteMdp, PolicyTable, QTable,
    RewardTable, DEFAULT_VI_MAX_ITERS, DEFAULT_VI_TOL,
};

/// Grid actions, indexed 0..4.
pub const GRID_ACTIONS: usize = 4;
const ACTION_DELTAS: [(i64, i64); GRID_ACTIONS] = [(0, -1), (0, 1), (-1, 0), (1, 0)]; // up, down, left, right

/// Parameters of a slippery gridworld with absorbing goal cells.
#[derive(Debug, Clone, PartialEq)]
pub struct GridworldSpec {
    pub width: usize,
    pub height: usize,
    pub goal_cells: Vec<(usize, usize)>,
    /// Probability that the intended move is replaced by a uniformly random
    /// *other* direction.
    pub slip_prob: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub discount: f64,
}

impl GridworldSpec {
    fn validate(&self) -> Result<()> {
        if self.width * self.height < 2 {
            return Err(BicqlError::invalid_input("gridworld needs at least 2 cells"));
        }
        if self.goal_cells.is_empty() {
            return Err(BicqlError::invalid_input("gridworld needs a goal cell"));
        }
        for &(x, y) in &self.goal_cells {
            if x >= self.width || y >= self.height {
                return Err(BicqlError::invalid_input(format!(
                    "goal cell ({x}, {y}) outside {}x{} grid",
                    self.width, self.height
                )));
            }
        }
        if self.goal_cells.len() >= self.width * self.height {
            return Err(BicqlError::invalid_input(
                "gridworld needs at least one non-goal cell",
            ));
        }
        if !(0.0..1.0).contains(&self.slip_prob) {
            return Err(BicqlError::invalid_input(format!(
                "slip_prob must lie in [0, 1), got {}",
                self.slip_prob
            )));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(BicqlError::invalid_input(format!(
                "discount must lie in (0, 1), got {}",
                self.discount
            )));
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn cell_index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }
}

/// Builds the gridworld MDP and its ground-truth reward table.
///
/// States are cells in row-major order; actions are up/down/left/right. The
/// intended move succeeds with probability 1 - slip_prob, otherwise one of the
/// other three directions is taken uniformly at random. Moves off the grid
/// stay in place. Goal cells are absorbing and pay `goal_reward` for every
/// action; all other cells pay `step_reward`. The initial distribution is
/// uniform over non-goal cells.
pub fn build_gridworld(spec: &GridworldSpec) -> Result<(FiniteMdp, RewardTable)> {
    spec.validate()?;
    let n = spec.n_states();
    let is_goal: Vec<bool> = {
        let mut flags = vec![false; n];
        for &(x, y) in &spec.goal_cells {
            flags[spec.cell_index(x, y)] = true;
        }
        flags
    };

    let move_target = |s: usize, a: usize| -> usize {
        let (x, y) = (s % spec.width, s / spec.width);
        let (dx, dy) = ACTION_DELTAS[a];
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= spec.width as i64 || ny >= spec.height as i64 {
            s
        } else {
            spec.cell_index(nx as usize, ny as usize)
        }
    };

    let mut transitions = vec![DMatrix::<f64>::zeros(n, n); GRID_ACTIONS];
    for s in 0..n {
        for a in 0..GRID_ACTIONS {
            if is_goal[s] {
                transitions[a][(s, s)] = 1.0;
                continue;
            }
            transitions[a][(s, move_target(s, a))] += 1.0 - spec.slip_prob;
            let slip_each = spec.slip_prob / (GRID_ACTIONS - 1) as f64;
            for other in 0..GRID_ACTIONS {
                if other != a {
                    transitions[a][(s, move_target(s, other))] += slip_each;
                }
            }
        }
    }

    let n_starts = is_goal.iter().filter(|g| !**g).count();
    let initial = DVector::from_fn(n, |s, _| {
        if is_goal[s] {
            0.0
        } else {
            1.0 / n_starts as f64
        }
    });

    let reward = RewardTable::from_fn(n, GRID_ACTIONS, |s, _| {
        if is_goal[s] {
            spec.goal_reward
        } else {
            spec.step_reward
        }
    });

    let mdp = FiniteMdp::new(transitions, initial, spec.discount)?;
    Ok((mdp, reward))
}

/// Builds a seeded random MDP: every (s, a) transitions to `branching`
/// distinct successors with Dirichlet(1, ..., 1) probabilities, rewards are
/// uniform in [-reward_scale, reward_scale], and the initial distribution is
/// uniform. Bit-for-bit reproducible from the seed.
pub fn build_random_mdp(
    n_states: usize,
    n_actions: usize,
    branching: usize,
    reward_scale: f64,
    discount: f64,
    seed: u64,
) -> Result<(FiniteMdp, RewardTable)> {
    if n_states == 0 || n_actions == 0 {
        return Err(BicqlError::invalid_input("need at least one state and action"));
    }
    if branching == 0 || branching > n_states {
        return Err(BicqlError::invalid_input(format!(
            "branching must lie in 1..={n_states}, got {branching}"
        )));
    }
    if !(reward_scale > 0.0) {
        return Err(BicqlError::invalid_input(format!(
            "reward_scale must be positive, got {reward_scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut transitions = vec![DMatrix::<f64>::zeros(n_states, n_states); n_actions];
    for s in 0..n_states {
        for a in 0..n_actions {
            let successors = sample(&mut rng, n_states, branching);
            // Dirichlet(1, ..., 1) via normalized Exp(1) draws.
            let mut weights: Vec<f64> = (0..branching)
                .map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
                .collect();
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
            for (k, s2) in successors.iter().enumerate() {
                transitions[a][(s, s2)] = weights[k];
            }
        }
    }

    let reward = RewardTable::from_fn(n_states, n_actions, |_, _| {
        rng.random_range(-reward_scale..=reward_scale)
    });

    let initial = DVector::from_element(n_states, 1.0 / n_states as f64);
    let mdp = FiniteMdp::new(transitions, initial, discount)?;
    Ok((mdp, reward))
}

/// A soft-optimal expert: holds the soft Q-table of the ground-truth reward;
/// the expert policy is its Boltzmann policy (temperature 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSpec {
    source_q: QTable,
}

impl ExpertSpec {
    /// Wraps a Q-table after checking it is a soft Bellman fixed point of the
    /// given ground-truth reward to within 1e-8 in sup norm.
    pub fn new(source_q: QTable, mdp: &FiniteMdp, true_reward: &RewardTable) -> Result<Self> {
        let residual = (soft_bellman_backup(mdp, true_reward, &source_q) - &source_q).amax();
        if residual > 1e-8 {
            return Err(BicqlError::invalid_input(format!(
                "expert Q is not a soft fixed point (residual {residual:.3e})"
            )));
        }
        Ok(ExpertSpec { source_q })
    }

    pub fn source_q(&self) -> &QTable {
        &self.source_q
    }

    /// The expert's Boltzmann policy.
    pub fn policy(&self) -> PolicyTable {
        boltzmann_policy(&self.source_q)
    }

    /// Boltzmann policy of `scale * Q`; large scales give a near-greedy,
    /// low-temperature variant of the same expert.
    pub fn scaled_policy(&self, scale: f64) -> PolicyTable {
        boltzmann_policy(&self.source_q.map(|v| v * scale))
    }
}

/// Solves the ground-truth soft Q-function exactly and wraps it as the expert.
pub fn make_expert(mdp: &FiniteMdp, true_reward: &RewardTable) -> Result<ExpertSpec> {
    let q = soft_value_iteration(mdp, true_reward, DEFAULT_VI_TOL, DEFAULT_VI_MAX_ITERS)?;
    ExpertSpec::new(q, mdp, true_reward)
}
