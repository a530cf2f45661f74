//! Run configuration: a flat `section.key = value` file with strict parsing.
//! Unknown keys and duplicates are errors, not warnings; the effective
//! (defaults-merged) configuration is echoed next to the outputs and
//! re-running from the echo reproduces them byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bicql::cql::CqlConfig;
use bicql::driver::{RewardInit, TrainConfig};
use bicql::env::GridworldSpec;
use bicql::error::{BicqlError, Result};
use bicql::reward::{RewardConfig, RewardSource};

/// Which environment the run builds.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSection {
    Gridworld(GridworldSpec),
    Random {
        n_states: usize,
        n_actions: usize,
        branching: usize,
        reward_scale: f64,
        discount: f64,
        seed: u64,
    },
}

impl EnvSection {
    pub fn discount(&self) -> f64 {
        match self {
            EnvSection::Gridworld(spec) => spec.discount,
            EnvSection::Random { discount, .. } => *discount,
        }
    }
}

/// How the behavior mixture is realized when collecting the offline dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixMode {
    /// Per-step policy mixture: behavior = (1-w) * expert + w * uniform.
    Policy,
    /// Episode-level mixture: w of the episodes follow the uniform policy,
    /// the rest follow the expert.
    Episode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub n_episodes: usize,
    pub horizon: usize,
    pub uniform_mix: f64,
    pub mix_mode: MixMode,
    pub n_expert_trajectories: usize,
    pub expert_horizon: usize,
    pub merge_expert_into_offline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub enable_bc: bool,
    pub bc_alpha: f64,
    pub tie_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagSection {
    pub lower_max: f64,
    pub upper_max: f64,
    pub ratio_max: f64,
    pub tail_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: EnvSection,
    pub data: DataSection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub diag: DiagSection,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            env: EnvSection::Gridworld(GridworldSpec {
                width: 5,
                height: 5,
                goal_cells: vec![(4, 4)],
                slip_prob: 0.1,
                step_reward: -0.01,
                goal_reward: 1.0,
                discount: 0.95,
            }),
            data: DataSection {
                n_episodes: 200,
                horizon: 50,
                uniform_mix: 0.5,
                mix_mode: MixMode::Policy,
                n_expert_trajectories: 10,
                expert_horizon: 50,
                merge_expert_into_offline: false,
            },
            train: TrainConfig::default(),
            eval: EvalSection {
                enable_bc: true,
                bc_alpha: 0.5,
                tie_tol: 1e-3,
            },
            diag: DiagSection {
                lower_max: 1e-2,
                upper_max: 1e-3,
                ratio_max: 1.0,
                tail_fraction: 0.25,
            },
            seeds: vec![0],
            output_dir: PathBuf::from("out"),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "env.kind",
    "env.width",
    "env.height",
    "env.goal_cells",
    "env.slip_prob",
    "env.step_reward",
    "env.goal_reward",
    "env.discount",
    "env.n_states",
    "env.n_actions",
    "env.branching",
    "env.reward_scale",
    "env.seed",
    "data.n_episodes",
    "data.horizon",
    "data.uniform_mix",
    "data.mix_mode",
    "data.n_expert_trajectories",
    "data.expert_horizon",
    "data.merge_expert_into_offline",
    "train.alpha",
    "train.lr_q",
    "train.k_q",
    "train.target_sync_period",
    "train.batch_size_q",
    "train.with_replacement_q",
    "train.lr_r",
    "train.k_r",
    "train.batch_size_r",
    "train.with_replacement_r",
    "train.reward_source",
    "train.r_max",
    "train.max_outer_iters",
    "train.theta_tol",
    "train.reward_init",
    "train.reward_init_scale",
    "train.record_snapshots",
    "eval.enable_bc",
    "eval.bc_alpha",
    "eval.tie_tol",
    "diag.lower_max",
    "diag.upper_max",
    "diag.ratio_max",
    "diag.tail_fraction",
    "run.seeds",
    "run.output_dir",
];

struct RawConfig {
    path: String,
    entries: BTreeMap<&'static str, (usize, String)>,
}

impl RawConfig {
    fn parse_err(&self, line: usize, msg: impl Into<String>) -> BicqlError {
        BicqlError::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    fn get(&self, key: &str) -> Option<&(usize, String)> {
        self.entries.get(key)
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some((line, raw)) => raw.parse::<T>().map(Some).map_err(|_| {
                self.parse_err(*line, format!("cannot parse {what} from '{raw}' for {key}"))
            }),
        }
    }
}

fn read_raw(path: &Path) -> Result<RawConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut raw = RawConfig {
        path: path.display().to_string(),
        entries: BTreeMap::new(),
    };
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(raw.parse_err(lineno, format!("expected 'section.key = value', got '{line}'")));
        };
        let key = key.trim();
        let value = value.trim().to_string();
        let Some(known) = KNOWN_KEYS.iter().find(|k| **k == key) else {
            return Err(raw.parse_err(lineno, format!("unknown key '{key}'")));
        };
        if let Some((first, _)) = raw.entries.get(known) {
            return Err(raw.parse_err(
                lineno,
                format!("duplicate key '{key}' (first set on line {first})"),
            ));
        }
        raw.entries.insert(known, (lineno, value));
    }
    Ok(raw)
}

fn parse_goal_cells(raw: &RawConfig, key: &str) -> Result<Option<Vec<(usize, usize)>>> {
    let Some((line, value)) = raw.get(key) else {
        return Ok(None);
    };
    let mut cells = Vec::new();
    for part in value.split(';') {
        let part = part.trim();
        let Some((x, y)) = part.split_once(',') else {
            return Err(raw.parse_err(*line, format!("goal cell '{part}' is not 'x,y'")));
        };
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| raw.parse_err(*line, format!("bad goal coordinate '{s}'")))
        };
        cells.push((parse(x)?, parse(y)?));
    }
    Ok(Some(cells))
}

fn parse_seeds(raw: &RawConfig) -> Result<Option<Vec<u64>>> {
    let Some((line, value)) = raw.get("run.seeds") else {
        return Ok(None);
    };
    let mut seeds = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        seeds.push(
            part.parse::<u64>()
                .map_err(|_| raw.parse_err(*line, format!("bad seed '{part}'")))?,
        );
    }
    if seeds.is_empty() {
        return Err(raw.parse_err(*line, "run.seeds must list at least one seed"));
    }
    Ok(Some(seeds))
}

/// Loads and validates a run configuration, merging file values over
/// defaults. `BICQL_OUT_DIR` overrides `run.output_dir` when set.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let raw = read_raw(path)?;
    let mut config = RunConfig::default();

    let kind = raw
        .get("env.kind")
        .map(|(_, v)| v.as_str())
        .unwrap_or("gridworld");
    let gridworld_only = [
        "env.width",
        "env.height",
        "env.goal_cells",
        "env.slip_prob",
        "env.step_reward",
        "env.goal_reward",
    ];
    let random_only = [
        "env.n_states",
        "env.n_actions",
        "env.branching",
        "env.reward_scale",
        "env.seed",
    ];
    match kind {
        "gridworld" => {
            for key in random_only {
                if let Some((line, _)) = raw.get(key) {
                    return Err(raw.parse_err(*line, format!("{key} does not apply to env.kind = gridworld")));
                }
            }
            let mut spec = match RunConfig::default().env {
                EnvSection::Gridworld(spec) => spec,
                EnvSection::Random { .. } => unreachable!(),
            };
            if let Some(v) = raw.typed::<usize>("env.width", "integer")? {
                spec.width = v;
            }
            if let Some(v) = raw.typed::<usize>("env.height", "integer")? {
                spec.height = v;
            }
            if let Some(cells) = parse_goal_cells(&raw, "env.goal_cells")? {
                spec.goal_cells = cells;
            }
            if let Some(v) = raw.typed::<f64>("env.slip_prob", "number")? {
                spec.slip_prob = v;
            }
            if let Some(v) = raw.typed::<f64>("env.step_reward", "number")? {
                spec.step_reward = v;
            }
            if let Some(v) = raw.typed::<f64>("env.goal_reward", "number")? {
                spec.goal_reward = v;
            }
            if let Some(v) = raw.typed::<f64>("env.discount", "number")? {
                spec.discount = v;
            }
            config.env = EnvSection::Gridworld(spec);
        }
        "random" => {
            for key in gridworld_only {
                if let Some((line, _)) = raw.get(key) {
                    return Err(raw.parse_err(*line, format!("{key} does not apply to env.kind = random")));
                }
            }
            config.env = EnvSection::Random {
                n_states: raw.typed::<usize>("env.n_states", "integer")?.unwrap_or(20),
                n_actions: raw.typed::<usize>("env.n_actions", "integer")?.unwrap_or(4),
                branching: raw.typed::<usize>("env.branching", "integer")?.unwrap_or(3),
                reward_scale: raw.typed::<f64>("env.reward_scale", "number")?.unwrap_or(1.0),
                discount: raw.typed::<f64>("env.discount", "number")?.unwrap_or(0.95),
                seed: raw.typed::<u64>("env.seed", "integer")?.unwrap_or(0),
            };
        }
        other => {
            let line = raw.get("env.kind").map(|(l, _)| *l).unwrap_or(1);
            return Err(raw.parse_err(line, format!("env.kind must be gridworld or random, got '{other}'")));
        }
    }

    if let Some(v) = raw.typed::<usize>("data.n_episodes", "integer")? {
        config.data.n_episodes = v;
    }
    if let Some(v) = raw.typed::<usize>("data.horizon", "integer")? {
        config.data.horizon = v;
    }
    if let Some(v) = raw.typed::<f64>("data.uniform_mix", "number")? {
        config.data.uniform_mix = v;
    }
    if let Some((line, v)) = raw.get("data.mix_mode") {
        config.data.mix_mode = match v.as_str() {
            "policy" => MixMode::Policy,
            "episode" => MixMode::Episode,
            other => {
                return Err(raw.parse_err(*line, format!("data.mix_mode must be policy or episode, got '{other}'")))
            }
        };
    }
    if let Some(v) = raw.typed::<usize>("data.n_expert_trajectories", "integer")? {
        config.data.n_expert_trajectories = v;
    }
    if let Some(v) = raw.typed::<usize>("data.expert_horizon", "integer")? {
        config.data.expert_horizon = v;
    }
    if let Some(v) = raw.typed::<bool>("data.merge_expert_into_offline", "bool")? {
        config.data.merge_expert_into_offline = v;
    }

    let mut cql = CqlConfig::default();
    if let Some(v) = raw.typed::<f64>("train.alpha", "number")? {
        cql.alpha = v;
    }
    if let Some(v) = raw.typed::<f64>("train.lr_q", "number")? {
        cql.lr_q = v;
    }
    if let Some(v) = raw.typed::<usize>("train.k_q", "integer")? {
        cql.k_q = v;
    }
    if let Some(v) = raw.typed::<usize>("train.target_sync_period", "integer")? {
        cql.target_sync_period = v;
    }
    if let Some(v) = raw.typed::<usize>("train.batch_size_q", "integer")? {
        cql.batch_size = v;
    }
    if let Some(v) = raw.typed::<bool>("train.with_replacement_q", "bool")? {
        cql.with_replacement = v;
    }

    let mut reward = RewardConfig::default();
    if let Some(v) = raw.typed::<f64>("train.lr_r", "number")? {
        reward.lr_r = v;
    }
    if let Some(v) = raw.typed::<usize>("train.k_r", "integer")? {
        reward.k_r = v;
    }
    if let Some(v) = raw.typed::<usize>("train.batch_size_r", "integer")? {
        reward.batch_size = v;
    }
    if let Some(v) = raw.typed::<bool>("train.with_replacement_r", "bool")? {
        reward.with_replacement = v;
    }
    if let Some((line, v)) = raw.get("train.reward_source") {
        reward.source = match v.as_str() {
            "expert_only" => RewardSource::ExpertOnly,
            "full_dataset" => RewardSource::FullDataset,
            other => {
                return Err(raw.parse_err(
                    *line,
                    format!("train.reward_source must be expert_only or full_dataset, got '{other}'"),
                ))
            }
        };
    }
    if let Some((line, v)) = raw.get("train.r_max") {
        reward.r_max = match v.as_str() {
            "none" => None,
            other => Some(other.parse::<f64>().map_err(|_| {
                raw.parse_err(*line, format!("train.r_max must be a number or none, got '{other}'"))
            })?),
        };
    }

    config.train = TrainConfig {
        gamma: config.env.discount(),
        cql,
        reward,
        ..TrainConfig::default()
    };
    if let Some(v) = raw.typed::<usize>("train.max_outer_iters", "integer")? {
        config.train.max_outer_iters = v;
    }
    if let Some(v) = raw.typed::<f64>("train.theta_tol", "number")? {
        config.train.theta_tol = v;
    }
    let init_scale = raw
        .typed::<f64>("train.reward_init_scale", "number")?
        .unwrap_or(1.0);
    if let Some((line, v)) = raw.get("train.reward_init") {
        config.train.reward_init = match v.as_str() {
            "zeros" => RewardInit::Zeros,
            "uniform_random" => RewardInit::UniformRandom { scale: init_scale },
            other => {
                return Err(raw.parse_err(
                    *line,
                    format!("train.reward_init must be zeros or uniform_random, got '{other}'"),
                ))
            }
        };
    }
    if let Some(v) = raw.typed::<bool>("train.record_snapshots", "bool")? {
        config.train.record_reward_snapshots = v;
    }

    if let Some(v) = raw.typed::<bool>("eval.enable_bc", "bool")? {
        config.eval.enable_bc = v;
    }
    if let Some(v) = raw.typed::<f64>("eval.bc_alpha", "number")? {
        config.eval.bc_alpha = v;
    }
    if let Some(v) = raw.typed::<f64>("eval.tie_tol", "number")? {
        config.eval.tie_tol = v;
    }

    if let Some(v) = raw.typed::<f64>("diag.lower_max", "number")? {
        config.diag.lower_max = v;
    }
    if let Some(v) = raw.typed::<f64>("diag.upper_max", "number")? {
        config.diag.upper_max = v;
    }
    if let Some(v) = raw.typed::<f64>("diag.ratio_max", "number")? {
        config.diag.ratio_max = v;
    }
    if let Some(v) = raw.typed::<f64>("diag.tail_fraction", "number")? {
        config.diag.tail_fraction = v;
    }

    if let Some(seeds) = parse_seeds(&raw)? {
        config.seeds = seeds;
    }
    if let Some((_, dir)) = raw.get("run.output_dir") {
        config.output_dir = PathBuf::from(dir);
    }
    if let Ok(dir) = std::env::var("BICQL_OUT_DIR") {
        if !dir.is_empty() {
            config.output_dir = PathBuf::from(dir);
        }
    }

    config.train.validate()?;
    Ok(config)
}

/// Serializes the effective configuration; parsing the result reproduces it.
pub fn echo_config(config: &RunConfig) -> String {
    let mut out = String::new();
    match &config.env {
        EnvSection::Gridworld(spec) => {
            out.push_str("env.kind = gridworld\n");
            let _ = writeln!(out, "env.width = {}", spec.width);
            let _ = writeln!(out, "env.height = {}", spec.height);
            let cells: Vec<String> = spec
                .goal_cells
                .iter()
                .map(|(x, y)| format!("{x},{y}"))
                .collect();
            let _ = writeln!(out, "env.goal_cells = {}", cells.join(";"));
            let _ = writeln!(out, "env.slip_prob = {}", spec.slip_prob);
            let _ = writeln!(out, "env.step_reward = {}", spec.step_reward);
            let _ = writeln!(out, "env.goal_reward = {}", spec.goal_reward);
            let _ = writeln!(out, "env.discount = {}", spec.discount);
        }
        EnvSection::Random {
            n_states,
            n_actions,
            branching,
            reward_scale,
            discount,
            seed,
        } => {
            out.push_str("env.kind = random\n");
            let _ = writeln!(out, "env.n_states = {n_states}");
            let _ = writeln!(out, "env.n_actions = {n_actions}");
            let _ = writeln!(out, "env.branching = {branching}");
            let _ = writeln!(out, "env.reward_scale = {reward_scale}");
            let _ = writeln!(out, "env.discount = {discount}");
            let _ = writeln!(out, "env.seed = {seed}");
        }
    }
    let d = &config.data;
    let _ = writeln!(out, "data.n_episodes = {}", d.n_episodes);
    let _ = writeln!(out, "data.horizon = {}", d.horizon);
    let _ = writeln!(out, "data.uniform_mix = {}", d.uniform_mix);
    let _ = writeln!(
        out,
        "data.mix_mode = {}",
        match d.mix_mode {
            MixMode::Policy => "policy",
            MixMode::Episode => "episode",
        }
    );
    let _ = writeln!(out, "data.n_expert_trajectories = {}", d.n_expert_trajectories);
    let _ = writeln!(out, "data.expert_horizon = {}", d.expert_horizon);
    let _ = writeln!(out, "data.merge_expert_into_offline = {}", d.merge_expert_into_offline);

    let t = &config.train;
    let _ = writeln!(out, "train.alpha = {}", t.cql.alpha);
    let _ = writeln!(out, "train.lr_q = {}", t.cql.lr_q);
    let _ = writeln!(out, "train.k_q = {}", t.cql.k_q);
    let _ = writeln!(out, "train.target_sync_period = {}", t.cql.target_sync_period);
    let _ = writeln!(out, "train.batch_size_q = {}", t.cql.batch_size);
    let _ = writeln!(out, "train.with_replacement_q = {}", t.cql.with_replacement);
    let _ = writeln!(out, "train.lr_r = {}", t.reward.lr_r);
    let _ = writeln!(out, "train.k_r = {}", t.reward.k_r);
    let _ = writeln!(out, "train.batch_size_r = {}", t.reward.batch_size);
    let _ = writeln!(out, "train.with_replacement_r = {}", t.reward.with_replacement);
    let _ = writeln!(
        out,
        "train.reward_source = {}",
        match t.reward.source {
            RewardSource::ExpertOnly => "expert_only",
            RewardSource::FullDataset => "full_dataset",
        }
    );
    match t.reward.r_max {
        Some(v) => {
            let _ = writeln!(out, "train.r_max = {v}");
        }
        None => out.push_str("train.r_max = none\n"),
    }
    let _ = writeln!(out, "train.max_outer_iters = {}", t.max_outer_iters);
    let _ = writeln!(out, "train.theta_tol = {}", t.theta_tol);
    match t.reward_init {
        RewardInit::Zeros => {
            out.push_str("train.reward_init = zeros\n");
            out.push_str("train.reward_init_scale = 1\n");
        }
        RewardInit::UniformRandom { scale } => {
            out.push_str("train.reward_init = uniform_random\n");
            let _ = writeln!(out, "train.reward_init_scale = {scale}");
        }
    }
    let _ = writeln!(out, "train.record_snapshots = {}", t.record_reward_snapshots);

    let _ = writeln!(out, "eval.enable_bc = {}", config.eval.enable_bc);
    let _ = writeln!(out, "eval.bc_alpha = {}", config.eval.bc_alpha);
    let _ = writeln!(out, "eval.tie_tol = {}", config.eval.tie_tol);

    let _ = writeln!(out, "diag.lower_max = {}", config.diag.lower_max);
    let _ = writeln!(out, "diag.upper_max = {}", config.diag.upper_max);
    let _ = writeln!(out, "diag.ratio_max = {}", config.diag.ratio_max);
    let _ = writeln!(out, "diag.tail_fraction = {}", config.diag.tail_fraction);

    let seeds: Vec<String> = config.seeds.iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "run.seeds = {}", seeds.join(","));
    let _ = writeln!(out, "run.output_dir = {}", config.output_dir.display());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(contents: &str) -> PathBuf {
        let path = std::env::temp_dir().join(format!(
            "bicql-cfg-{}-{}.cfg",
            std::process::id(),
            contents.len()
        ));
        std::fs::write(&path, contents).unwrap();
        path
    }

    #[test]
    fn defaults_round_trip_through_echo() {
        let config = RunConfig::default();
        let path = write_config(&echo_config(&config));
        let reparsed = load_config(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(reparsed, config);
        assert_eq!(echo_config(&reparsed), echo_config(&config));
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let path = write_config("env.kind = gridworld\nenv.wdith = 5\n");
        match load_config(&path) {
            Err(BicqlError::Parse { line, msg, .. }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("unknown key"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn duplicate_key_is_rejected() {
        let path = write_config("train.alpha = 1\ntrain.alpha = 2\n");
        assert!(matches!(
            load_config(&path),
            Err(BicqlError::Parse { line: 2, .. })
        ));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn inapplicable_env_key_is_rejected() {
        let path = write_config("env.kind = random\nenv.width = 5\n");
        assert!(matches!(load_config(&path), Err(BicqlError::Parse { .. })));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn goal_cell_list_and_seed_list_parse() {
        let path = write_config(
            "env.goal_cells = 4,4;0,3\nrun.seeds = 1, 2, 3\ncomment = here is fine # no\n",
        );
        // "comment" is an unknown key; drop it for the real check.
        std::fs::remove_file(&path).ok();
        let path = write_config("env.goal_cells = 4,4;0,3\nrun.seeds = 1, 2, 3\n");
        let config = load_config(&path).unwrap();
        std::fs::remove_file(&path).ok();
        match config.env {
            EnvSection::Gridworld(spec) => assert_eq!(spec.goal_cells, vec![(4, 4), (0, 3)]),
            other => panic!("unexpected env {other:?}"),
        }
        assert_eq!(config.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn gamma_comes_from_env_discount() {
        let path = write_config("env.discount = 0.8\n");
        let config = load_config(&path).unwrap();
        std::fs::remove_file(&path).ok();
        assert_eq!(config.train.gamma, 0.8);
    }
}
