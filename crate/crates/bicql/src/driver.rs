//! The outer bi-level alternation: conservative Q-learning below, reward
//! regression above, repeated until the reward table stops moving.
//!
//! Each outer iteration runs all `k_q` lower-level steps (with target syncs),
//! then `k_r` reward steps, then records losses, the sup-norm reward delta
//! and the empirical contraction ratio `delta_k / delta_{k-1}`.

use std::time::Instant;

use thiserror::Error;

use crate::cql::{solve_lower_level, solve_lower_level_from, CqlConfig, QLearnerState};
use crate::dataset::{BatchSampler, ExpertDataset, Transition, TransitionDataset};
use crate::error::{BicqlError, Result};
use crate::mdp::{QTable, RewardTable};
use crate::reward::{
    expert_log_likelihood, reward_step, RewardConfig, RewardSource,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STREAM_LOWER: u64 = 2;
const STREAM_UPPER: u64 = 3;
const STREAM_REWARD_INIT: u64 = 4;
const STREAM_RESIDUAL_LOWER: u64 = 5;
const STREAM_RESIDUAL_UPPER: u64 = 6;

/// Reward table initialization (the tabular analogue of network weight init).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardInit {
    Zeros,
    UniformRandom { scale: f64 },
}

/// Full configuration of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub gamma: f64,
    pub cql: CqlConfig,
    pub reward: RewardConfig,
    pub max_outer_iters: usize,
    /// Convergence threshold on the sup-norm reward delta, measured after the
    /// upper-level block.
    pub theta_tol: f64,
    pub seed: u64,
    pub reward_init: RewardInit,
    /// Keep a copy of the reward table per outer iteration (used by the
    /// convergence-speed evaluation).
    pub record_reward_snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.95,
            cql: CqlConfig::default(),
            reward: RewardConfig::default(),
            max_outer_iters: 200,
            theta_tol: 1e-4,
            seed: 0,
            reward_init: RewardInit::Zeros,
            record_reward_snapshots: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(BicqlError::invalid_input(format!(
                "gamma must lie in (0, 1), got {}",
                self.gamma
            )));
        }
        if !(self.theta_tol > 0.0) {
            return Err(BicqlError::invalid_input("theta_tol must be positive"));
        }
        if let RewardInit::UniformRandom { scale } = self.reward_init {
            if !(scale > 0.0) {
                return Err(BicqlError::invalid_input("reward_init scale must be positive"));
            }
        }
        self.cql.validate()?;
        self.reward.validate()
    }
}

/// Per-outer-iteration training record.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord {
    /// 1-based outer iteration index.
    pub iter: usize,
    pub loss_be: f64,
    pub loss_cql: f64,
    pub loss_r: f64,
    pub expert_ll: f64,
    /// Sup-norm reward change over this iteration.
    pub delta_theta: f64,
    /// delta_k / delta_{k-1}; absent on the first iteration and whenever the
    /// previous delta was zero.
    pub ratio: Option<f64>,
    pub wall_clock_ms: f64,
}

/// Training time series plus the convergence flag.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub records: Vec<OuterRecord>,
    pub converged: bool,
    /// Reward table after each outer iteration (empty unless requested).
    pub snapshots: Vec<RewardTable>,
}

pub const TRAIN_REPORT_HEADER: &str = "iter,loss_be,loss_cql,loss_r,expert_ll,delta_theta,ratio,ms";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

impl TrainReport {
    /// Serializes the records as CSV. With `include_timing` off the ms column
    /// is written as 0 so that identical runs produce byte-identical files.
    pub fn to_csv(&self, include_timing: bool) -> String {
        let mut out = String::new();
        out.push_str(TRAIN_REPORT_HEADER);
        out.push('\n');
        for r in &self.records {
            let ratio = r.ratio.map(fmt).unwrap_or_default();
            let ms = if include_timing { fmt(r.wall_clock_ms) } else { "0".to_string() };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.iter,
                fmt(r.loss_be),
                fmt(r.loss_cql),
                fmt(r.loss_r),
                fmt(r.expert_ll),
                fmt(r.delta_theta),
                ratio,
                ms
            ));
        }
        out
    }
}

/// Parses records back from the CSV emitted by [`TrainReport::to_csv`].
pub fn parse_train_report_csv(path_label: &str, text: &str) -> Result<Vec<OuterRecord>> {
    let parse_err = |line: usize, msg: String| BicqlError::Parse {
        path: path_label.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".into()))?;
    if header.trim() != TRAIN_REPORT_HEADER {
        return Err(parse_err(1, format!("unexpected header '{header}'")));
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(lineno, format!("expected 8 fields, found {}", fields.len())));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("cannot parse '{}'", fields[i])))
        };
        let ratio = if fields[6].trim().is_empty() {
            None
        } else {
            Some(f(6)?)
        };
        records.push(OuterRecord {
            iter: fields[0]
                .trim()
                .parse::<usize>()
                .map_err(|_| parse_err(lineno, format!("cannot parse iter '{}'", fields[0])))?,
            loss_be: f(1)?,
            loss_cql: f(2)?,
            loss_r: f(3)?,
            expert_ll: f(4)?,
            delta_theta: f(5)?,
            ratio,
            wall_clock_ms: f(7)?,
        });
    }
    Ok(records)
}

/// Final tables plus the training report.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub reward: RewardTable,
    pub q: QTable,
    pub report: TrainReport,
}

/// A training failure carrying whatever was recorded before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct TrainError {
    pub error: BicqlError,
    pub partial: Box<TrainReport>,
}

/// An in-progress bi-level run. Step it manually for interactive use, or let
/// [`run_bicql`] drive it to convergence.
#[derive(Debug, Clone)]
pub struct BicqlRun {
    config: TrainConfig,
    dataset: TransitionDataset,
    expert: ExpertDataset,
    upper_records: Vec<Transition>,
    state: QLearnerState,
    reward: RewardTable,
    prev_reward: RewardTable,
    prev_delta: Option<f64>,
    lower_sampler: BatchSampler,
    upper_sampler: BatchSampler,
    records: Vec<OuterRecord>,
    snapshots: Vec<RewardTable>,
    converged: bool,
}

impl BicqlRun {
    pub fn new(
        shape: (usize, usize),
        dataset: TransitionDataset,
        expert: ExpertDataset,
        config: TrainConfig,
    ) -> Result<Self> {
        let (n_states, n_actions) = shape;
        if n_states == 0 || n_actions == 0 {
            return Err(BicqlError::invalid_input("mdp shape must be non-zero"));
        }
        config.validate()?;
        if dataset.is_empty() {
            return Err(BicqlError::invalid_input("offline dataset is empty"));
        }
        if expert.is_empty() {
            return Err(BicqlError::invalid_input("expert dataset is empty"));
        }
        dataset.check_bounds(n_states, n_actions)?;
        expert.check_bounds(n_states, n_actions)?;

        let upper_records = match config.reward.source {
            RewardSource::ExpertOnly => expert.to_transitions()?,
            RewardSource::FullDataset => dataset.records.clone(),
        };
        if !config.cql.with_replacement && config.cql.batch_size > dataset.len() {
            return Err(BicqlError::invalid_input(
                "lower-level batch_size exceeds dataset size without replacement",
            ));
        }
        if !config.reward.with_replacement && config.reward.batch_size > upper_records.len() {
            return Err(BicqlError::invalid_input(
                "upper-level batch_size exceeds dataset size without replacement",
            ));
        }

        let reward = match config.reward_init {
            RewardInit::Zeros => RewardTable::zeros(n_states, n_actions),
            RewardInit::UniformRandom { scale } => {
                let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
                rng.set_stream(STREAM_REWARD_INIT);
                RewardTable::from_fn(n_states, n_actions, |_, _| {
                    rng.random_range(-scale..=scale)
                })
            }
        };

        let lower_sampler = BatchSampler::new(
            config.cql.batch_size,
            config.cql.with_replacement,
            config.seed,
            STREAM_LOWER,
        );
        let upper_sampler = BatchSampler::new(
            config.reward.batch_size,
            config.reward.with_replacement,
            config.seed,
            STREAM_UPPER,
        );

        Ok(BicqlRun {
            state: QLearnerState::new(QTable::zeros(n_states, n_actions)),
            prev_reward: reward.clone(),
            reward,
            prev_delta: None,
            lower_sampler,
            upper_sampler,
            records: Vec::new(),
            snapshots: Vec::new(),
            converged: false,
            config,
            dataset,
            expert,
            upper_records,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn reward(&self) -> &RewardTable {
        &self.reward
    }

    pub fn q_table(&self) -> &QTable {
        &self.state.q
    }

    pub fn records(&self) -> &[OuterRecord] {
        &self.records
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn completed_iters(&self) -> usize {
        self.records.len()
    }

    /// Runs one outer iteration: the full lower-level block, then the
    /// upper-level block, then bookkeeping.
    pub fn step_outer(&mut self) -> Result<&OuterRecord> {
        let started = Instant::now();
        let (loss_be, loss_cql) = solve_lower_level(
            &self.reward,
            &self.dataset,
            &self.config.cql,
            self.config.gamma,
            &mut self.state,
            &mut self.lower_sampler,
        )?;

        let mut sum_r = 0.0;
        for _ in 0..self.config.reward.k_r {
            let batch = self.upper_sampler.next_batch(&self.upper_records)?;
            sum_r += reward_step(
                &mut self.reward,
                &self.state.q,
                &batch,
                &self.config.reward,
                self.config.gamma,
            )?;
        }
        let loss_r = sum_r / self.config.reward.k_r as f64;

        let expert_ll = expert_log_likelihood(&self.state.q, &self.expert)?;
        let delta_theta = (&self.reward - &self.prev_reward).amax();
        let ratio = match self.prev_delta {
            Some(prev) if prev > 0.0 => Some(delta_theta / prev),
            _ => None,
        };
        self.prev_reward.copy_from(&self.reward);
        self.prev_delta = Some(delta_theta);

        if delta_theta < self.config.theta_tol {
            self.converged = true;
        }
        if self.config.record_reward_snapshots {
            self.snapshots.push(self.reward.clone());
        }
        self.records.push(OuterRecord {
            iter: self.records.len() + 1,
            loss_be,
            loss_cql,
            loss_r,
            expert_ll,
            delta_theta,
            ratio,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(self.records.last().expect("record just pushed"))
    }

    pub fn report_so_far(&self) -> TrainReport {
        TrainReport {
            records: self.records.clone(),
            converged: self.converged,
            snapshots: self.snapshots.clone(),
        }
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            reward: self.reward,
            q: self.state.q,
            report: TrainReport {
                records: self.records,
                converged: self.converged,
                snapshots: self.snapshots,
            },
        }
    }
}

/// Alternates the two levels until the reward delta drops below
/// `config.theta_tol` or `config.max_outer_iters` is reached. Fully
/// deterministic given the config (timing aside).
///
/// Hitting the iteration cap is not an error: the report comes back with
/// `converged == false`. Divergence aborts with the partial report attached.
pub fn run_bicql(
    shape: (usize, usize),
    dataset: TransitionDataset,
    expert: ExpertDataset,
    config: TrainConfig,
) -> std::result::Result<TrainOutcome, TrainError> {
    let mut run = BicqlRun::new(shape, dataset, expert, config).map_err(|error| TrainError {
        error,
        partial: Box::new(TrainReport::default()),
    })?;
    while run.completed_iters() < run.config.max_outer_iters && !run.converged {
        if let Err(error) = run.step_outer() {
            let partial = Box::new(run.report_so_far());
            return Err(TrainError { error, partial });
        }
    }
    Ok(run.finish())
}

/// Runs one training per seed on worker threads; results come back in seed
/// order. The closure builds the per-seed run (datasets, config and all).
pub fn run_sweep<F>(seeds: &[u64], build: F) -> Vec<(u64, std::result::Result<TrainOutcome, TrainError>)>
where
    F: Fn(u64) -> Result<BicqlRun> + Sync,
{
    let mut results: Vec<Option<(u64, std::result::Result<TrainOutcome, TrainError>)>> =
        (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, &seed) in results.iter_mut().zip(seeds) {
            let build = &build;
            scope.spawn(move || {
                let outcome = match build(seed) {
                    Ok(mut run) => {
                        let mut failed = None;
                        while run.completed_iters() < run.config().max_outer_iters
                            && !run.converged()
                        {
                            if let Err(error) = run.step_outer() {
                                failed = Some(TrainError {
                                    error,
                                    partial: Box::new(run.report_so_far()),
                                });
                                break;
                            }
                        }
                        match failed {
                            Some(err) => Err(err),
                            None => Ok(run.finish()),
                        }
                    }
                    Err(error) => Err(TrainError {
                        error,
                        partial: Box::new(TrainReport::default()),
                    }),
                };
                *slot = Some((seed, outcome));
            });
        }
    });
    results.into_iter().map(|r| r.expect("worker finished")).collect()
}

/// Sup-norm residuals of the two fixed-point conditions at a trained pair:
/// how far a freshly re-solved lower level moves away from `q`, and how far
/// `k_r` fresh upper steps move the reward.
pub fn fixed_point_residuals(
    reward: &RewardTable,
    q: &QTable,
    dataset: &TransitionDataset,
    expert: &ExpertDataset,
    config: &TrainConfig,
) -> Result<(f64, f64)> {
    config.validate()?;
    let mut lower_sampler = BatchSampler::new(
        config.cql.batch_size,
        config.cql.with_replacement,
        config.seed,
        STREAM_RESIDUAL_LOWER,
    );
    let resolved = solve_lower_level_from(
        reward,
        dataset,
        &config.cql,
        config.gamma,
        q.clone(),
        &mut lower_sampler,
    )?;
    let lower_residual = (&resolved.q - q).amax();

    let upper_records = match config.reward.source {
        RewardSource::ExpertOnly => expert.to_transitions()?,
        RewardSource::FullDataset => dataset.records.clone(),
    };
    let mut upper_sampler = BatchSampler::new(
        config.reward.batch_size,
        config.reward.with_replacement,
        config.seed,
        STREAM_RESIDUAL_UPPER,
    );
    let mut moved = reward.clone();
    for _ in 0..config.reward.k_r {
        let batch = upper_sampler.next_batch(&upper_records)?;
        reward_step(&mut moved, q, &batch, &config.reward, config.gamma)?;
    }
    let upper_residual = (&moved - reward).amax();
    Ok((lower_residual, upper_residual))
}

/// Median and max of the contraction ratios over the last `tail_fraction` of
/// iterations. Iterations without a defined ratio are excluded; it is an
/// error if none remain or the report has fewer than 3 iterations.
pub fn contraction_summary(records: &[OuterRecord], tail_fraction: f64) -> Result<(f64, f64)> {
    if records.len() < 3 {
        return Err(BicqlError::invalid_input(format!(
            "contraction summary needs at least 3 iterations, got {}",
            records.len()
        )));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(BicqlError::invalid_input("tail_fraction must lie in (0, 1]"));
    }
    let tail_len = ((records.len() as f64 * tail_fraction).ceil() as usize).max(1);
    let tail = &records[records.len() - tail_len..];
    let mut ratios: Vec<f64> = tail.iter().filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        return Err(BicqlError::invalid_input(
            "no defined contraction ratios in the report tail",
        ));
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).expect("finite ratios"));
    let n = ratios.len();
    let median = if n % 2 == 1 {
        ratios[n / 2]
    } else {
        0.5 * (ratios[n / 2 - 1] + ratios[n / 2])
    };
    let max = ratios[n - 1];
    Ok((median, max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ExpertRecord;

    fn one_state_data() -> (TransitionDataset, ExpertDataset) {
        let dataset = TransitionDataset {
            records: vec![Transition { state: 0, action: 0, next_state: 0 }],
        };
        let expert = ExpertDataset {
            records: vec![ExpertRecord { state: 0, action: 0, next_state: Some(0) }],
        };
        (dataset, expert)
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            gamma: 0.5,
            cql: CqlConfig {
                alpha: 1.0,
                lr_q: 0.5,
                target_sync_period: 1,
                k_q: 20,
                batch_size: 1,
                with_replacement: true,
            },
            reward: RewardConfig {
                lr_r: 0.5,
                k_r: 5,
                batch_size: 1,
                ..RewardConfig::default()
            },
            max_outer_iters: 100,
            theta_tol: 1e-10,
            seed: 0,
            reward_init: RewardInit::Zeros,
            record_reward_snapshots: true,
        }
    }

    #[test]
    fn zero_outer_iters_returns_initial_tables() {
        let (dataset, expert) = one_state_data();
        let config = TrainConfig {
            max_outer_iters: 0,
            ..small_config()
        };
        let out = run_bicql((1, 1), dataset, expert, config).unwrap();
        assert!(out.report.records.is_empty());
        assert_eq!(out.reward, RewardTable::zeros(1, 1));
        assert_eq!(out.q, QTable::zeros(1, 1));
        assert!(!out.report.converged);
    }

    #[test]
    fn identical_configs_give_identical_reports() {
        let (dataset, expert) = one_state_data();
        let a = run_bicql((1, 1), dataset.clone(), expert.clone(), small_config()).unwrap();
        let b = run_bicql((1, 1), dataset, expert, small_config()).unwrap();
        // Bit-identical up to wall-clock timing, which the CSV omits.
        assert_eq!(a.report.to_csv(false), b.report.to_csv(false));
        assert_eq!(a.reward, b.reward);
        assert_eq!(a.q, b.q);
    }

    #[test]
    fn one_state_problem_reaches_its_fixed_point() {
        // Single state/action: the CQL term vanishes and the alternation must
        // settle at Q = r / (1 - gamma), r = soft advantage of Q.
        let (dataset, expert) = one_state_data();
        let out = run_bicql((1, 1), dataset.clone(), expert.clone(), small_config()).unwrap();
        assert!(out.report.converged);
        let (lower, upper) = fixed_point_residuals(
            &out.reward,
            &out.q,
            &dataset,
            &expert,
            &small_config(),
        )
        .unwrap();
        assert!(lower < 1e-6, "lower residual {lower}");
        assert!(upper < 1e-6, "upper residual {upper}");
    }

    #[test]
    fn exact_one_state_fixed_point_has_zero_residuals() {
        // theta* = 1, Q = r / (1 - gamma) = 2 at gamma = 0.5, built in closed
        // form rather than trained.
        let (dataset, expert) = one_state_data();
        let reward = RewardTable::from_element(1, 1, 1.0);
        let q = QTable::from_element(1, 1, 2.0);
        let (lower, upper) =
            fixed_point_residuals(&reward, &q, &dataset, &expert, &small_config()).unwrap();
        assert!(lower < 1e-6, "lower residual {lower}");
        assert!(upper < 1e-6, "upper residual {upper}");
    }

    #[test]
    fn divergence_carries_partial_report() {
        let (dataset, expert) = one_state_data();
        let mut config = small_config();
        // With the target frozen, each step multiplies the Bellman gap by
        // 1 - lr_q = -3, overflowing after a few completed outer iterations.
        config.cql.lr_q = 4.0;
        config.cql.target_sync_period = 1_000_000;
        config.theta_tol = 1e-300;
        config.reward_init = RewardInit::UniformRandom { scale: 1.0 }; // off the trivial fixed point
        let err = run_bicql((1, 1), dataset, expert, config).unwrap_err();
        assert!(matches!(err.error, BicqlError::Divergence { .. }));
        assert!(!err.partial.records.is_empty());
    }

    #[test]
    fn lower_block_completes_before_reward_steps() {
        // With gamma = 0 and a one-shot batch, the reward regression target is
        // exactly the post-lower-level Q entry. Running one outer iteration
        // with k_r large enough to fully solve the regression must therefore
        // leave reward == q, which only holds if the ordering is lower-then-upper.
        let (dataset, expert) = one_state_data();
        let config = TrainConfig {
            gamma: 0.5,
            cql: CqlConfig {
                alpha: 0.0,
                lr_q: 1.0,
                target_sync_period: 1,
                k_q: 3,
                batch_size: 1,
                with_replacement: true,
            },
            reward: RewardConfig {
                lr_r: 0.5,
                k_r: 60,
                batch_size: 1,
                ..RewardConfig::default()
            },
            max_outer_iters: 1,
            theta_tol: 1e-12,
            seed: 0,
            reward_init: RewardInit::UniformRandom { scale: 1.0 },
            record_reward_snapshots: false,
        };
        let mut run = BicqlRun::new((1, 1), dataset, expert, config).unwrap();
        run.step_outer().unwrap();
        let q = run.q_table()[(0, 0)];
        let expected_target = q - 0.5 * q; // q - gamma * logsumexp over one action
        assert!(
            (run.reward()[(0, 0)] - expected_target).abs() < 1e-9,
            "reward {} vs target {expected_target}",
            run.reward()[(0, 0)]
        );
    }

    fn synthetic_records(deltas: &[f64]) -> Vec<OuterRecord> {
        let mut prev: Option<f64> = None;
        deltas
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let ratio = match prev {
                    Some(p) if p > 0.0 => Some(d / p),
                    _ => None,
                };
                prev = Some(d);
                OuterRecord {
                    iter: i + 1,
                    loss_be: 0.0,
                    loss_cql: 0.0,
                    loss_r: 0.0,
                    expert_ll: 0.0,
                    delta_theta: d,
                    ratio,
                    wall_clock_ms: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn contraction_summary_of_geometric_deltas() {
        let records = synthetic_records(&[1.0, 0.5, 0.25, 0.125, 0.0625]);
        let (median, max) = contraction_summary(&records, 0.5).unwrap();
        assert!((median - 0.5).abs() < 1e-12);
        assert!((max - 0.5).abs() < 1e-12);
    }

    #[test]
    fn contraction_summary_excludes_undefined_ratios() {
        let records = synthetic_records(&[0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            contraction_summary(&records, 1.0),
            Err(BicqlError::InvalidInput(_))
        ));
    }

    #[test]
    fn contraction_summary_needs_three_iterations() {
        let records = synthetic_records(&[1.0, 0.5]);
        assert!(contraction_summary(&records, 1.0).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let (dataset, expert) = one_state_data();
        let mut config = small_config();
        config.max_outer_iters = 5;
        config.theta_tol = 1e-300;
        let out = run_bicql((1, 1), dataset, expert, config).unwrap();
        let csv = out.report.to_csv(false);
        let parsed = parse_train_report_csv("report", &csv).unwrap();
        assert_eq!(parsed.len(), out.report.records.len());
        for (a, b) in parsed.iter().zip(&out.report.records) {
            assert_eq!(a.iter, b.iter);
            assert_eq!(a.delta_theta, b.delta_theta);
            assert_eq!(a.ratio, b.ratio);
            assert_eq!(a.loss_be, b.loss_be);
        }
    }

    #[test]
    fn sweep_returns_results_in_seed_order() {
        let (dataset, expert) = one_state_data();
        let seeds = [3_u64, 1, 2];
        let results = run_sweep(&seeds, |seed| {
            BicqlRun::new(
                (1, 1),
                dataset.clone(),
                expert.clone(),
                TrainConfig {
                    seed,
                    ..small_config()
                },
            )
        });
        assert_eq!(results.len(), 3);
        for ((s, outcome), expected) in results.iter().zip(seeds) {
            assert_eq!(*s, expected);
            assert!(outcome.is_ok());
        }
    }
}
