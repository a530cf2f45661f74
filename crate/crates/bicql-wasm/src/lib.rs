//! Interactive gridworld demo compiled to WebAssembly.
//!
//! One session owns a gridworld, its soft-optimal expert, the collected
//! offline/expert datasets and an in-progress training run. The page drives
//! three operations: rebuild the world from parameters, advance training by a
//! few outer iterations, and score the learned reward against the ground
//! truth. Heatmap and arrow buffers come back as flat vectors; everything
//! else is JSON strings.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use bicql::bc::{behavioral_cloning, BcConfig};
use bicql::cql::CqlConfig;
use bicql::dataset::{collect_expert_demos, collect_transitions, ExpertDataset, TransitionDataset};
use bicql::driver::{BicqlRun, RewardInit, TrainConfig};
use bicql::env::{build_gridworld, make_expert, GridworldSpec};
use bicql::eval::{evaluate_learned_reward, expert_optimality_check, reward_recovery_stats};
use bicql::mdp::{
    boltzmann_policy, exact_policy_return, mix_with_uniform, soft_value_iteration, soft_values,
    FiniteMdp, PolicyTable, RewardTable,
};

#[derive(Debug, Clone, Deserialize)]
pub struct DemoParams {
    pub width: usize,
    pub height: usize,
    pub goal_x: usize,
    pub goal_y: usize,
    pub slip_prob: f64,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub discount: f64,
    pub uniform_mix: f64,
    pub n_episodes: usize,
    pub horizon: usize,
    pub n_expert_trajectories: usize,
    pub seed: u64,
    pub alpha: f64,
    /// "expert_only" (the unstable textbook form) or "full_dataset".
    pub reward_source: String,
    pub max_outer_iters: usize,
}

#[derive(Debug, Serialize)]
pub struct StepStats {
    iter: usize,
    loss_be: f64,
    loss_cql: f64,
    loss_r: f64,
    expert_ll: f64,
    delta_theta: f64,
    ratio: Option<f64>,
    normalized_score: f64,
    converged: bool,
}

#[derive(Debug, Serialize)]
pub struct EvalStats {
    learned_return: f64,
    expert_return: f64,
    uniform_return: f64,
    bc_return: f64,
    normalized_score: f64,
    expert_greedy_fraction: f64,
    reward_pearson: Option<f64>,
    covered_cells: usize,
    iterations: usize,
    converged: bool,
}

fn train_config(params: &DemoParams) -> Result<TrainConfig, String> {
    let source = match params.reward_source.as_str() {
        "expert_only" => bicql::reward::RewardSource::ExpertOnly,
        "full_dataset" => bicql::reward::RewardSource::FullDataset,
        other => return Err(format!("unknown reward_source '{other}'")),
    };
    Ok(TrainConfig {
        gamma: params.discount,
        cql: CqlConfig {
            alpha: params.alpha,
            lr_q: 2.0,
            target_sync_period: 10,
            k_q: 60,
            batch_size: 0,
            with_replacement: false,
        },
        reward: bicql::reward::RewardConfig {
            lr_r: 0.5,
            k_r: 80,
            batch_size: 0,
            with_replacement: false,
            source,
            r_max: None,
        },
        max_outer_iters: params.max_outer_iters,
        theta_tol: 1e-4,
        seed: params.seed,
        reward_init: RewardInit::Zeros,
        record_reward_snapshots: false,
    })
}

pub struct SessionInner {
    params: DemoParams,
    mdp: FiniteMdp,
    true_reward: RewardTable,
    expert_policy: PolicyTable,
    expert_return: f64,
    dataset: TransitionDataset,
    demos: ExpertDataset,
    run: BicqlRun,
}

impl SessionInner {
    pub fn build(params: DemoParams) -> Result<Self, String> {
        let spec = GridworldSpec {
            width: params.width,
            height: params.height,
            goal_cells: vec![(params.goal_x, params.goal_y)],
            slip_prob: params.slip_prob,
            step_reward: params.step_reward,
            goal_reward: params.goal_reward,
            discount: params.discount,
        };
        let (mdp, true_reward) = build_gridworld(&spec).map_err(|e| e.to_string())?;
        let expert = make_expert(&mdp, &true_reward).map_err(|e| e.to_string())?;
        let expert_policy = expert.policy();
        let expert_return =
            exact_policy_return(&mdp, &true_reward, &expert_policy).map_err(|e| e.to_string())?;
        let behavior = mix_with_uniform(&expert_policy, params.uniform_mix);
        let dataset = collect_transitions(&mdp, &behavior, params.n_episodes, params.horizon, params.seed)
            .map_err(|e| e.to_string())?;
        let demos = collect_expert_demos(
            &mdp,
            &expert_policy,
            params.n_expert_trajectories,
            params.horizon,
            params.seed,
        )
        .map_err(|e| e.to_string())?;
        let config = train_config(&params)?;
        let run = BicqlRun::new(mdp.shape(), dataset.clone(), demos.clone(), config)
            .map_err(|e| e.to_string())?;
        Ok(SessionInner {
            params,
            mdp,
            true_reward,
            expert_policy,
            expert_return,
            dataset,
            demos,
            run,
        })
    }

    pub fn step(&mut self, n: usize) -> Result<StepStats, String> {
        for _ in 0..n {
            if self.run.converged() || self.run.completed_iters() >= self.params.max_outer_iters {
                break;
            }
            self.run.step_outer().map_err(|e| e.to_string())?;
        }
        let score = self.normalized_score()?;
        let last = self.run.records().last();
        Ok(StepStats {
            iter: self.run.completed_iters(),
            loss_be: last.map(|r| r.loss_be).unwrap_or(0.0),
            loss_cql: last.map(|r| r.loss_cql).unwrap_or(0.0),
            loss_r: last.map(|r| r.loss_r).unwrap_or(0.0),
            expert_ll: last.map(|r| r.expert_ll).unwrap_or(0.0),
            delta_theta: last.map(|r| r.delta_theta).unwrap_or(0.0),
            ratio: last.and_then(|r| r.ratio),
            normalized_score: score,
            converged: self.run.converged(),
        })
    }

    fn normalized_score(&self) -> Result<f64, String> {
        let (_, learned_return) =
            evaluate_learned_reward(&self.mdp, &self.true_reward, self.run.reward())
                .map_err(|e| e.to_string())?;
        Ok(learned_return / self.expert_return)
    }

    pub fn evaluate(&self) -> Result<EvalStats, String> {
        let (_, learned_return) =
            evaluate_learned_reward(&self.mdp, &self.true_reward, self.run.reward())
                .map_err(|e| e.to_string())?;
        let (n_states, n_actions) = self.mdp.shape();
        let uniform_return = exact_policy_return(
            &self.mdp,
            &self.true_reward,
            &bicql::mdp::uniform_policy(n_states, n_actions),
        )
        .map_err(|e| e.to_string())?;
        let bc = behavioral_cloning(&self.demos, n_states, n_actions, &BcConfig::default())
            .map_err(|e| e.to_string())?;
        let bc_return =
            exact_policy_return(&self.mdp, &self.true_reward, &bc).map_err(|e| e.to_string())?;
        let greedy = expert_optimality_check(self.run.q_table(), &self.demos, 1e-3);
        let (pearson, covered) =
            reward_recovery_stats(&self.true_reward, self.run.reward(), &self.dataset);
        Ok(EvalStats {
            learned_return,
            expert_return: self.expert_return,
            uniform_return,
            bc_return,
            normalized_score: learned_return / self.expert_return,
            expert_greedy_fraction: greedy,
            reward_pearson: pearson,
            covered_cells: covered,
            iterations: self.run.completed_iters(),
            converged: self.run.converged(),
        })
    }

    /// Per-cell mean of a table over actions (gridworld rewards are shared
    /// across actions, so the mean is the cell value for the true table).
    fn cell_means(table: &RewardTable) -> Vec<f64> {
        (0..table.nrows())
            .map(|s| table.row(s).iter().sum::<f64>() / table.ncols() as f64)
            .collect()
    }

    pub fn true_reward_cells(&self) -> Vec<f64> {
        Self::cell_means(&self.true_reward)
    }

    pub fn learned_reward_cells(&self) -> Vec<f64> {
        Self::cell_means(self.run.reward())
    }

    pub fn learned_value_cells(&self) -> Result<Vec<f64>, String> {
        let q = soft_value_iteration(&self.mdp, self.run.reward(), 1e-8, 200_000)
            .map_err(|e| e.to_string())?;
        Ok(soft_values(&q).iter().copied().collect())
    }

    fn arrows_of(policy: &PolicyTable) -> Vec<u8> {
        (0..policy.nrows())
            .map(|s| {
                let mut best = 0;
                for a in 1..policy.ncols() {
                    if policy[(s, a)] > policy[(s, best)] {
                        best = a;
                    }
                }
                best as u8
            })
            .collect()
    }

    pub fn expert_arrows(&self) -> Vec<u8> {
        Self::arrows_of(&self.expert_policy)
    }

    pub fn learned_arrows(&self) -> Result<Vec<u8>, String> {
        let q = soft_value_iteration(&self.mdp, self.run.reward(), 1e-8, 200_000)
            .map_err(|e| e.to_string())?;
        Ok(Self::arrows_of(&boltzmann_policy(&q)))
    }
}

#[wasm_bindgen]
pub struct DemoSession {
    inner: SessionInner,
}

#[wasm_bindgen]
impl DemoSession {
    /// Builds the world, the expert, both datasets and a fresh training run
    /// from a JSON parameter object.
    #[wasm_bindgen(constructor)]
    pub fn new(params_json: &str) -> Result<DemoSession, JsError> {
        let params: DemoParams =
            serde_json::from_str(params_json).map_err(|e| JsError::new(&e.to_string()))?;
        let inner = SessionInner::build(params).map_err(|e| JsError::new(&e))?;
        Ok(DemoSession { inner })
    }

    /// Advances training by up to `n` outer iterations and returns the latest
    /// record plus the current normalized score, as JSON.
    pub fn step(&mut self, n: usize) -> Result<String, JsError> {
        let stats = self.inner.step(n).map_err(|e| JsError::new(&e))?;
        serde_json::to_string(&stats).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Full evaluation against the ground truth (exact returns, expert
    /// optimality, reward correlation, BC baseline), as JSON.
    pub fn evaluate(&self) -> Result<String, JsError> {
        let stats = self.inner.evaluate().map_err(|e| JsError::new(&e))?;
        serde_json::to_string(&stats).map_err(|e| JsError::new(&e.to_string()))
    }

    pub fn width(&self) -> usize {
        self.inner.params.width
    }

    pub fn height(&self) -> usize {
        self.inner.params.height
    }

    pub fn goal_index(&self) -> usize {
        self.inner.params.goal_y * self.inner.params.width + self.inner.params.goal_x
    }

    pub fn converged(&self) -> bool {
        self.inner.run.converged()
    }

    pub fn iterations(&self) -> usize {
        self.inner.run.completed_iters()
    }

    pub fn true_reward_cells(&self) -> Vec<f64> {
        self.inner.true_reward_cells()
    }

    pub fn learned_reward_cells(&self) -> Vec<f64> {
        self.inner.learned_reward_cells()
    }

    pub fn learned_value_cells(&self) -> Result<Vec<f64>, JsError> {
        self.inner.learned_value_cells().map_err(|e| JsError::new(&e))
    }

    pub fn expert_arrows(&self) -> Vec<u8> {
        self.inner.expert_arrows()
    }

    pub fn learned_arrows(&self) -> Result<Vec<u8>, JsError> {
        self.inner.learned_arrows().map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> DemoParams {
        DemoParams {
            width: 4,
            height: 4,
            goal_x: 3,
            goal_y: 3,
            slip_prob: 0.1,
            step_reward: -0.01,
            goal_reward: 1.0,
            discount: 0.9,
            uniform_mix: 0.5,
            n_episodes: 40,
            horizon: 30,
            n_expert_trajectories: 5,
            seed: 7,
            alpha: 1.0,
            reward_source: "full_dataset".to_string(),
            max_outer_iters: 40,
        }
    }

    #[test]
    fn session_builds_steps_and_evaluates() {
        let mut session = SessionInner::build(params()).unwrap();
        assert_eq!(session.true_reward_cells().len(), 16);
        assert_eq!(session.expert_arrows().len(), 16);

        let s1 = session.step(5).unwrap();
        assert_eq!(s1.iter, 5);
        let s2 = session.step(5).unwrap();
        assert_eq!(s2.iter, 10);
        assert!(s2.delta_theta.is_finite());

        let eval = session.evaluate().unwrap();
        assert!(eval.expert_return > 0.0);
        assert!(eval.normalized_score.is_finite());
        assert_eq!(eval.iterations, 10);
    }

    #[test]
    fn step_stops_at_iteration_cap() {
        let mut session = SessionInner::build(DemoParams {
            max_outer_iters: 3,
            ..params()
        })
        .unwrap();
        let stats = session.step(100).unwrap();
        assert_eq!(stats.iter, 3);
    }

    #[test]
    fn params_json_round_trip() {
        let json = r#"{
            "width": 5, "height": 5, "goal_x": 4, "goal_y": 4,
            "slip_prob": 0.1, "step_reward": -0.01, "goal_reward": 1.0,
            "discount": 0.95, "uniform_mix": 0.5, "n_episodes": 20,
            "horizon": 20, "n_expert_trajectories": 3, "seed": 1,
            "alpha": 1.0, "reward_source": "full_dataset", "max_outer_iters": 10
        }"#;
        let parsed: DemoParams = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.width, 5);
        SessionInner::build(parsed).unwrap();
    }
}
