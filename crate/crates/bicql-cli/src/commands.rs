//! The four pipeline commands: gen, train, eval, diagnose.
//!
//! Exit codes: 0 success, 2 non-convergence (train) or failed diagnostic
//! thresholds (diagnose), 1 error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use bicql::bc::{behavioral_cloning, BcConfig};
use bicql::dataset::{
    collect_expert_demos, collect_transitions, load_expert, load_transitions, save_expert,
    save_transitions, ExpertDataset, TransitionDataset,
};
use bicql::driver::{
    contraction_summary, fixed_point_residuals, parse_train_report_csv, run_sweep, BicqlRun,
    TrainConfig,
};
use bicql::env::{build_gridworld, build_random_mdp, make_expert, ExpertSpec};
use bicql::error::{BicqlError, Result};
use bicql::eval::{
    convergence_outer_iters, evaluate_learned_reward, expert_optimality_check,
    reward_recovery_stats, EvalReport,
};
use bicql::mdp::{exact_policy_return, mix_with_uniform, uniform_policy, FiniteMdp, RewardTable};

use crate::artifacts;
use crate::config::{echo_config, load_config, EnvSection, MixMode, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_WARN: i32 = 2;

/// Seed used to decorrelate the expert half of an episode-mixed dataset from
/// its uniform half.
const EPISODE_MIX_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

fn build_env(config: &RunConfig) -> Result<(FiniteMdp, RewardTable)> {
    match &config.env {
        EnvSection::Gridworld(spec) => build_gridworld(spec),
        EnvSection::Random {
            n_states,
            n_actions,
            branching,
            reward_scale,
            discount,
            seed,
        } => build_random_mdp(*n_states, *n_actions, *branching, *reward_scale, *discount, *seed),
    }
}

fn seed_name(base: &str, ext: &str, seed: u64, multi: bool) -> String {
    if multi {
        format!("{base}_seed{seed}.{ext}")
    } else {
        format!("{base}.{ext}")
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(BicqlError::invalid_input(format!(
            "missing artifact {}; run the earlier pipeline stages first",
            path.display()
        )))
    }
}

fn write_echo(config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(&config.output_dir)?;
    std::fs::write(config.output_dir.join("effective_config.cfg"), echo_config(config))?;
    Ok(())
}

fn collect_offline(
    config: &RunConfig,
    mdp: &FiniteMdp,
    expert: &ExpertSpec,
    seed: u64,
) -> Result<TransitionDataset> {
    let (n_states, n_actions) = mdp.shape();
    let expert_policy = expert.policy();
    match config.data.mix_mode {
        MixMode::Policy => {
            let behavior = mix_with_uniform(&expert_policy, config.data.uniform_mix);
            collect_transitions(mdp, &behavior, config.data.n_episodes, config.data.horizon, seed)
        }
        MixMode::Episode => {
            let n_uniform =
                (config.data.n_episodes as f64 * config.data.uniform_mix).round() as usize;
            let n_expert = config.data.n_episodes - n_uniform.min(config.data.n_episodes);
            let mut dataset = collect_transitions(
                mdp,
                &uniform_policy(n_states, n_actions),
                n_uniform,
                config.data.horizon,
                seed,
            )?;
            let expert_part = collect_transitions(
                mdp,
                &expert_policy,
                n_expert,
                config.data.horizon,
                seed.wrapping_add(EPISODE_MIX_SEED_OFFSET),
            )?;
            dataset.records.extend(expert_part.records.iter().copied());
            Ok(dataset)
        }
    }
}

pub fn cmd_gen(config_path: &Path) -> Result<i32> {
    let config = load_config(config_path)?;
    let (mdp, true_reward) = build_env(&config)?;
    let expert = make_expert(&mdp, &true_reward)?;
    write_echo(&config)?;

    let out = &config.output_dir;
    artifacts::write_mdp(&out.join("mdp.csv"), &mdp, &true_reward)?;
    println!(
        "mdp.csv: {} states, {} actions, discount {}",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.discount()
    );

    let multi = config.seeds.len() > 1;
    for &seed in &config.seeds {
        let offline = {
            let mut d = collect_offline(&config, &mdp, &expert, seed)?;
            let demos = collect_expert_demos(
                &mdp,
                &expert.policy(),
                config.data.n_expert_trajectories,
                config.data.expert_horizon,
                seed,
            )?;
            if config.data.merge_expert_into_offline {
                d.records.extend(demos.to_transitions()?.iter().copied());
            }
            (d, demos)
        };
        let (dataset, demos) = offline;
        let offline_path = out.join(seed_name("offline", "csv", seed, multi));
        let expert_path = out.join(seed_name("expert", "csv", seed, multi));
        save_transitions(&offline_path, &dataset)?;
        save_expert(&expert_path, &demos)?;
        println!(
            "seed {seed}: {} offline records -> {}, {} expert records -> {}",
            dataset.len(),
            offline_path.display(),
            demos.len(),
            expert_path.display()
        );
    }
    Ok(EXIT_OK)
}

struct LoadedRun {
    mdp: FiniteMdp,
    true_reward: RewardTable,
}

fn load_env(config: &RunConfig) -> Result<LoadedRun> {
    let path = config.output_dir.join("mdp.csv");
    require(&path)?;
    let (mdp, true_reward) = artifacts::load_mdp(&path)?;
    Ok(LoadedRun { mdp, true_reward })
}

fn load_datasets(
    config: &RunConfig,
    seed: u64,
    multi: bool,
) -> Result<(TransitionDataset, ExpertDataset)> {
    let offline_path = config.output_dir.join(seed_name("offline", "csv", seed, multi));
    let expert_path = config.output_dir.join(seed_name("expert", "csv", seed, multi));
    require(&offline_path)?;
    require(&expert_path)?;
    Ok((load_transitions(&offline_path)?, load_expert(&expert_path)?))
}

pub fn cmd_train(config_path: &Path) -> Result<i32> {
    let config = load_config(config_path)?;
    let env = load_env(&config)?;
    write_echo(&config)?;
    let shape = env.mdp.shape();
    let multi = config.seeds.len() > 1;
    let out = &config.output_dir;

    let started = Instant::now();
    let results = run_sweep(&config.seeds, |seed| {
        let (dataset, demos) = load_datasets(&config, seed, multi)?;
        BicqlRun::new(
            shape,
            dataset,
            demos,
            TrainConfig {
                seed,
                ..config.train.clone()
            },
        )
    });

    let mut exit = EXIT_OK;
    for (seed, outcome) in results {
        match outcome {
            Ok(outcome) => {
                artifacts::write_table(
                    &out.join(seed_name("reward_learned", "csv", seed, multi)),
                    &outcome.reward,
                )?;
                artifacts::write_table(
                    &out.join(seed_name("q_learned", "csv", seed, multi)),
                    &outcome.q,
                )?;
                std::fs::write(
                    out.join(seed_name("train_report", "csv", seed, multi)),
                    outcome.report.to_csv(false),
                )?;
                if config.train.record_reward_snapshots {
                    artifacts::write_snapshots(
                        &out.join(seed_name("reward_snapshots", "csv", seed, multi)),
                        &outcome.report.snapshots,
                    )?;
                }
                let iters = outcome.report.records.len();
                let delta = outcome
                    .report
                    .records
                    .last()
                    .map(|r| r.delta_theta)
                    .unwrap_or(0.0);
                let total_ms: f64 = outcome.report.records.iter().map(|r| r.wall_clock_ms).sum();
                if outcome.report.converged {
                    println!(
                        "seed {seed}: converged after {iters} outer iterations (delta {delta:.3e}, {total_ms:.0} ms)"
                    );
                } else {
                    println!(
                        "seed {seed}: iteration cap {iters} reached without convergence (delta {delta:.3e}, {total_ms:.0} ms)"
                    );
                    exit = exit.max(EXIT_WARN);
                }
            }
            Err(err) => {
                // Flush whatever was recorded before the failure.
                std::fs::write(
                    out.join(seed_name("train_report", "csv", seed, multi)),
                    err.partial.to_csv(false),
                )?;
                eprintln!("seed {seed}: training failed: {err}");
                return Err(err.error);
            }
        }
    }
    println!("total wall time {:.1}s", started.elapsed().as_secs_f64());
    Ok(exit)
}

fn eval_one(
    config: &RunConfig,
    env: &LoadedRun,
    seed: u64,
    multi: bool,
    use_true_reward: bool,
) -> Result<EvalReport> {
    let (n_states, n_actions) = env.mdp.shape();
    let out = &config.output_dir;
    let learned_reward = if use_true_reward {
        env.true_reward.clone()
    } else {
        let path = out.join(seed_name("reward_learned", "csv", seed, multi));
        require(&path)?;
        artifacts::load_table(&path, n_states, n_actions)?
    };
    let q_path = out.join(seed_name("q_learned", "csv", seed, multi));
    let q_learned = if use_true_reward && !q_path.exists() {
        bicql::mdp::soft_value_iteration(&env.mdp, &learned_reward, 1e-10, 200_000)?
    } else {
        require(&q_path)?;
        artifacts::load_table(&q_path, n_states, n_actions)?
    };
    let (dataset, demos) = load_datasets(config, seed, multi)?;

    let expert = make_expert(&env.mdp, &env.true_reward)?;
    let expert_return = exact_policy_return(&env.mdp, &env.true_reward, &expert.policy())?;
    let (_, learned_return) = evaluate_learned_reward(&env.mdp, &env.true_reward, &learned_reward)?;
    let normalized_score = if expert_return != 0.0 {
        Some(learned_return / expert_return)
    } else {
        None
    };
    let bc_return = if config.eval.enable_bc {
        let bc = behavioral_cloning(
            &demos,
            n_states,
            n_actions,
            &BcConfig {
                laplace_alpha: config.eval.bc_alpha,
            },
        )?;
        Some(exact_policy_return(&env.mdp, &env.true_reward, &bc)?)
    } else {
        None
    };
    let expert_greedy_fraction = expert_optimality_check(&q_learned, &demos, config.eval.tie_tol);
    let (reward_pearson, reward_covered_cells) =
        reward_recovery_stats(&env.true_reward, &learned_reward, &dataset);

    let snapshots_path = out.join(seed_name("reward_snapshots", "csv", seed, multi));
    let convergence = if snapshots_path.exists() {
        let snapshots = artifacts::load_snapshots(&snapshots_path, n_states, n_actions)?;
        convergence_outer_iters(&env.mdp, &env.true_reward, &snapshots)?
    } else {
        None
    };

    Ok(EvalReport {
        learned_return,
        expert_return,
        bc_return,
        normalized_score,
        expert_greedy_fraction,
        reward_pearson,
        reward_covered_cells,
        convergence_outer_iters: convergence,
    })
}

pub fn cmd_eval(config_path: &Path, use_true_reward: bool) -> Result<i32> {
    let config = load_config(config_path)?;
    let env = load_env(&config)?;
    write_echo(&config)?;
    let multi = config.seeds.len() > 1;
    let out = &config.output_dir;

    let mut csv = artifacts::eval_csv_header(config.eval.enable_bc);
    csv.push('\n');
    for &seed in &config.seeds {
        let report = eval_one(&config, &env, seed, multi, use_true_reward)?;
        std::fs::write(
            out.join(seed_name("eval_report", "txt", seed, multi)),
            artifacts::eval_text(seed, &report, config.eval.enable_bc),
        )?;
        csv.push_str(&artifacts::eval_csv_row(seed, &report, config.eval.enable_bc));
        csv.push('\n');
        match report.normalized_score {
            Some(score) => println!("seed {seed}: normalized_score {score:.4}"),
            None => println!("seed {seed}: normalized_score undefined (expert return is zero)"),
        }
    }
    std::fs::write(out.join("eval_report.csv"), csv)?;
    Ok(EXIT_OK)
}

pub fn cmd_diagnose(config_path: &Path) -> Result<i32> {
    let config = load_config(config_path)?;
    let env = load_env(&config)?;
    write_echo(&config)?;
    let (n_states, n_actions) = env.mdp.shape();
    let multi = config.seeds.len() > 1;
    let out = &config.output_dir;

    let mut csv = String::from(artifacts::DIAG_HEADER);
    csv.push('\n');
    let mut exit = EXIT_OK;
    for &seed in &config.seeds {
        let reward_path = out.join(seed_name("reward_learned", "csv", seed, multi));
        let q_path = out.join(seed_name("q_learned", "csv", seed, multi));
        let report_path = out.join(seed_name("train_report", "csv", seed, multi));
        require(&reward_path)?;
        require(&q_path)?;
        require(&report_path)?;
        let reward = artifacts::load_table(&reward_path, n_states, n_actions)?;
        let q = artifacts::load_table(&q_path, n_states, n_actions)?;
        let (dataset, demos) = load_datasets(&config, seed, multi)?;

        let train_config = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let (lower, upper) = fixed_point_residuals(&reward, &q, &dataset, &demos, &train_config)?;
        let records =
            parse_train_report_csv(&report_path.display().to_string(), &std::fs::read_to_string(&report_path)?)?;
        let contraction = if records.len() >= 3 {
            contraction_summary(&records, config.diag.tail_fraction).ok()
        } else {
            None
        };

        let mut within = lower <= config.diag.lower_max && upper <= config.diag.upper_max;
        if let Some((median, _)) = contraction {
            within = within && median < config.diag.ratio_max;
        }
        if !within {
            exit = exit.max(EXIT_WARN);
        }
        match contraction {
            Some((median, max)) => println!(
                "seed {seed}: lower {lower:.3e}, upper {upper:.3e}, tail ratio median {median:.4} max {max:.4}{}",
                if within { "" } else { "  [diagnostic failed]" }
            ),
            None => println!(
                "seed {seed}: lower {lower:.3e}, upper {upper:.3e}, contraction absent{}",
                if within { "" } else { "  [diagnostic failed]" }
            ),
        }
        csv.push_str(&artifacts::diag_csv_row(&artifacts::DiagRow {
            seed,
            lower_residual: lower,
            upper_residual: upper,
            contraction,
            within_thresholds: within,
        }));
        csv.push('\n');
    }
    std::fs::write(out.join("diagnostics.csv"), csv)?;
    Ok(exit)
}

/// Resolves the config argument, tolerating a missing file early with a
/// readable message.
pub fn config_arg(path: &str) -> Result<PathBuf> {
    let path = PathBuf::from(path);
    if !path.exists() {
        return Err(BicqlError::invalid_input(format!(
            "config file {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}
