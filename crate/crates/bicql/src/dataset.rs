//! Offline datasets: collection by rollout, CSV persistence and mini-batch
//! sampling.
//!
//! Transition files are UTF-8 CSV with header `state,action,next_state`.
//! Expert files use the same format, or `state,action` when collected without
//! next states; the loader infers the layout from the header.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BicqlError, Result};
use crate::mdp::{FiniteMdp, PolicyTable};

/// One offline transition record (s, a, s').
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub next_state: usize,
}

/// One expert demonstration record; `next_state` is present when the
/// demonstrations were collected with successor states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpertRecord {
    pub state: usize,
    pub action: usize,
    pub next_state: Option<usize>,
}

/// The offline transition dataset D.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransitionDataset {
    pub records: Vec<Transition>,
}

/// The expert demonstration dataset D_E.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpertDataset {
    pub records: Vec<ExpertRecord>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that every index fits a (n_states, n_actions) table.
    pub fn check_bounds(&self, n_states: usize, n_actions: usize) -> Result<()> {
        for (i, t) in self.records.iter().enumerate() {
            if t.state >= n_states || t.next_state >= n_states || t.action >= n_actions {
                return Err(BicqlError::invalid_input(format!(
                    "transition record {i} ({}, {}, {}) outside {n_states} states / {n_actions} actions",
                    t.state, t.action, t.next_state
                )));
            }
        }
        Ok(())
    }
}

impl ExpertDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn check_bounds(&self, n_states: usize, n_actions: usize) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            let next_ok = r.next_state.map_or(true, |s2| s2 < n_states);
            if r.state >= n_states || r.action >= n_actions || !next_ok {
                return Err(BicqlError::invalid_input(format!(
                    "expert record {i} outside {n_states} states / {n_actions} actions"
                )));
            }
        }
        Ok(())
    }

    /// Converts to transition records; fails when any record lacks a next
    /// state (required by the reward regression).
    pub fn to_transitions(&self) -> Result<Vec<Transition>> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let next_state = r.next_state.ok_or_else(|| {
                    BicqlError::invalid_input(format!(
                        "expert record {i} has no next_state; re-collect demonstrations with successors"
                    ))
                })?;
                Ok(Transition {
                    state: r.state,
                    action: r.action,
                    next_state,
                })
            })
            .collect()
    }

    /// Distinct states visited by the expert, in ascending order.
    pub fn visited_states(&self) -> Vec<usize> {
        let mut states: Vec<usize> = self.records.iter().map(|r| r.state).collect();
        states.sort_unstable();
        states.dedup();
        states
    }
}

/// Draws a state index from a probability row via inverse-CDF scan.
pub(crate) fn sample_categorical(rng: &mut impl Rng, probs: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    // Rounding left a sliver of mass; attribute it to the final index.
    last
}

fn sample_action(rng: &mut impl Rng, policy: &PolicyTable, s: usize) -> usize {
    sample_categorical(rng, policy.row(s).iter().copied())
}

fn sample_next(rng: &mut impl Rng, mdp: &FiniteMdp, s: usize, a: usize) -> usize {
    sample_categorical(rng, mdp.action_matrix(a).row(s).iter().copied())
}

const STREAM_OFFLINE: u64 = 0;
const STREAM_EXPERT: u64 = 1;

fn rollout_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rolls out `behavior` from the initial distribution for `n_episodes`
/// episodes of `horizon` steps each. Deterministic given the seed.
pub fn collect_transitions(
    mdp: &FiniteMdp,
    behavior: &PolicyTable,
    n_episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<TransitionDataset> {
    if horizon == 0 {
        return Err(BicqlError::invalid_input("horizon must be at least 1"));
    }
    let mut rng = rollout_rng(seed, STREAM_OFFLINE);
    let mut records = Vec::with_capacity(n_episodes * horizon);
    for _ in 0..n_episodes {
        let mut s = sample_categorical(&mut rng, mdp.initial_dist().iter().copied());
        for _ in 0..horizon {
            let a = sample_action(&mut rng, behavior, s);
            let s2 = sample_next(&mut rng, mdp, s, a);
            records.push(Transition {
                state: s,
                action: a,
                next_state: s2,
            });
            s = s2;
        }
    }
    Ok(TransitionDataset { records })
}

/// Rolls out the expert's Boltzmann policy; records keep the successor state.
pub fn collect_expert_demos(
    mdp: &FiniteMdp,
    expert_policy: &PolicyTable,
    n_trajectories: usize,
    horizon: usize,
    seed: u64,
) -> Result<ExpertDataset> {
    if horizon == 0 {
        return Err(BicqlError::invalid_input("horizon must be at least 1"));
    }
    let mut rng = rollout_rng(seed, STREAM_EXPERT);
    let mut records = Vec::with_capacity(n_trajectories * horizon);
    for _ in 0..n_trajectories {
        let mut s = sample_categorical(&mut rng, mdp.initial_dist().iter().copied());
        for _ in 0..horizon {
            let a = sample_action(&mut rng, expert_policy, s);
            let s2 = sample_next(&mut rng, mdp, s, a);
            records.push(ExpertRecord {
                state: s,
                action: a,
                next_state: Some(s2),
            });
            s = s2;
        }
    }
    Ok(ExpertDataset { records })
}

const TRANSITION_HEADER: &str = "state,action,next_state";
const EXPERT_SHORT_HEADER: &str = "state,action";

pub fn save_transitions(path: impl AsRef<Path>, dataset: &TransitionDataset) -> Result<()> {
    let mut out = String::with_capacity(16 * dataset.len() + 32);
    out.push_str(TRANSITION_HEADER);
    out.push('\n');
    for t in &dataset.records {
        writeln!(out, "{},{},{}", t.state, t.action, t.next_state).expect("write to string");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Saves expert demonstrations; the next_state column is written only when
/// every record carries one (a mixed dataset is rejected).
pub fn save_expert(path: impl AsRef<Path>, dataset: &ExpertDataset) -> Result<()> {
    let with_next = dataset.records.iter().filter(|r| r.next_state.is_some()).count();
    let mut out = String::with_capacity(16 * dataset.len() + 32);
    if with_next == dataset.len() {
        out.push_str(TRANSITION_HEADER);
        out.push('\n');
        for r in &dataset.records {
            writeln!(out, "{},{},{}", r.state, r.action, r.next_state.unwrap())
                .expect("write to string");
        }
    } else if with_next == 0 {
        out.push_str(EXPERT_SHORT_HEADER);
        out.push('\n');
        for r in &dataset.records {
            writeln!(out, "{},{}", r.state, r.action).expect("write to string");
        }
    } else {
        return Err(BicqlError::invalid_input(
            "expert dataset mixes records with and without next_state",
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> BicqlError {
    BicqlError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_index(path: &Path, line: usize, field: &str, raw: &str) -> Result<usize> {
    raw.trim().parse::<usize>().map_err(|_| {
        parse_err(
            path,
            line,
            format!("cannot parse {field} from '{}'", raw.trim()),
        )
    })
}

fn read_csv_rows(path: &Path, expect_headers: &[&str]) -> Result<(usize, Vec<(usize, Vec<String>)>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected a header"))?;
    let header = header.trim();
    let which = expect_headers
        .iter()
        .position(|h| *h == header)
        .ok_or_else(|| {
            parse_err(
                path,
                1,
                format!("unexpected header '{header}', expected one of {expect_headers:?}"),
            )
        })?;
    let n_cols = expect_headers[which].split(',').count();
    let mut rows = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<String> = raw.split(',').map(|f| f.trim().to_string()).collect();
        if fields.len() != n_cols {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {n_cols} fields, found {}", fields.len()),
            ));
        }
        rows.push((lineno, fields));
    }
    Ok((which, rows))
}

pub fn load_transitions(path: impl AsRef<Path>) -> Result<TransitionDataset> {
    let path = path.as_ref();
    let (_, rows) = read_csv_rows(path, &[TRANSITION_HEADER])?;
    let mut records = Vec::with_capacity(rows.len());
    for (lineno, fields) in rows {
        records.push(Transition {
            state: parse_index(path, lineno, "state", &fields[0])?,
            action: parse_index(path, lineno, "action", &fields[1])?,
            next_state: parse_index(path, lineno, "next_state", &fields[2])?,
        });
    }
    Ok(TransitionDataset { records })
}

pub fn load_expert(path: impl AsRef<Path>) -> Result<ExpertDataset> {
    let path = path.as_ref();
    let (which, rows) = read_csv_rows(path, &[TRANSITION_HEADER, EXPERT_SHORT_HEADER])?;
    let mut records = Vec::with_capacity(rows.len());
    for (lineno, fields) in rows {
        let next_state = if which == 0 {
            Some(parse_index(path, lineno, "next_state", &fields[2])?)
        } else {
            None
        };
        records.push(ExpertRecord {
            state: parse_index(path, lineno, "state", &fields[0])?,
            action: parse_index(path, lineno, "action", &fields[1])?,
            next_state,
        });
    }
    Ok(ExpertDataset { records })
}

/// Uniform mini-batch sampler owning its RNG state.
///
/// With replacement (the default) every batch is `batch_size` independent
/// uniform draws; without replacement a batch is a uniform sample of distinct
/// records, so `batch_size == len` yields a permutation of the dataset.
/// A batch size of 0 stands for "the full dataset every batch".
#[derive(Debug, Clone)]
pub struct BatchSampler {
    pub batch_size: usize,
    pub with_replacement: bool,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(batch_size: usize, with_replacement: bool, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        BatchSampler {
            batch_size,
            with_replacement,
            rng,
        }
    }

    pub fn next_indices(&mut self, len: usize) -> Result<Vec<usize>> {
        if len == 0 {
            return Err(BicqlError::invalid_state("cannot sample from an empty dataset"));
        }
        let batch = if self.batch_size == 0 { len } else { self.batch_size };
        if self.with_replacement {
            Ok((0..batch).map(|_| self.rng.random_range(0..len)).collect())
        } else {
            if batch > len {
                return Err(BicqlError::invalid_input(format!(
                    "batch_size {batch} exceeds dataset size {len} without replacement"
                )));
            }
            Ok(rand::seq::index::sample(&mut self.rng, len, batch).into_vec())
        }
    }

    /// Draws the next mini-batch of records.
    pub fn next_batch<T: Copy>(&mut self, records: &[T]) -> Result<Vec<T>> {
        let idx = self.next_indices(records.len())?;
        Ok(idx.into_iter().map(|i| records[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{build_gridworld, build_random_mdp, GridworldSpec};
    use crate::mdp::uniform_policy;
    use nalgebra::{DMatrix, DVector};

    fn tiny_mdp() -> FiniteMdp {
        FiniteMdp::new(
            vec![DMatrix::from_element(1, 1, 1.0); 2],
            DVector::from_element(1, 1.0),
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn collect_counts_records() {
        let mdp = tiny_mdp();
        let d = collect_transitions(&mdp, &uniform_policy(1, 2), 2, 3, 0).unwrap();
        assert_eq!(d.len(), 6);
    }

    #[test]
    fn collect_on_single_state_mdp() {
        let mdp = tiny_mdp();
        let d = collect_transitions(&mdp, &uniform_policy(1, 2), 1, 5, 1).unwrap();
        assert!(d.records.iter().all(|t| t.state == 0 && t.next_state == 0));
    }

    #[test]
    fn collect_is_deterministic() {
        let (mdp, _) = build_random_mdp(6, 3, 2, 1.0, 0.9, 9).unwrap();
        let pi = uniform_policy(6, 3);
        let a = collect_transitions(&mdp, &pi, 4, 10, 77).unwrap();
        let b = collect_transitions(&mdp, &pi, 4, 10, 77).unwrap();
        assert_eq!(a, b);
        let c = collect_transitions(&mdp, &pi, 4, 10, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn expert_demo_counts_scale_with_trajectories() {
        let (mdp, reward) = build_random_mdp(5, 2, 2, 1.0, 0.9, 4).unwrap();
        let expert = crate::env::make_expert(&mdp, &reward).unwrap();
        let one = collect_expert_demos(&mdp, &expert.policy(), 1, 50, 5).unwrap();
        assert_eq!(one.len(), 50);
        let ten = collect_expert_demos(&mdp, &expert.policy(), 10, 50, 5).unwrap();
        assert_eq!(ten.len(), 500);
        assert!(ten.records.iter().all(|r| r.next_state.is_some()));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join(format!("bicql-ds-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let (mdp, reward) = build_random_mdp(5, 2, 2, 1.0, 0.9, 4).unwrap();
        let d = collect_transitions(&mdp, &uniform_policy(5, 2), 3, 7, 1).unwrap();
        let p = dir.join("d.csv");
        save_transitions(&p, &d).unwrap();
        assert_eq!(load_transitions(&p).unwrap(), d);

        let expert = crate::env::make_expert(&mdp, &reward).unwrap();
        let e = collect_expert_demos(&mdp, &expert.policy(), 2, 5, 2).unwrap();
        let pe = dir.join("e.csv");
        save_expert(&pe, &e).unwrap();
        assert_eq!(load_expert(&pe).unwrap(), e);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn expert_file_without_next_state_column() {
        let dir = std::env::temp_dir().join(format!("bicql-ds2-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let e = ExpertDataset {
            records: vec![
                ExpertRecord { state: 0, action: 1, next_state: None },
                ExpertRecord { state: 2, action: 0, next_state: None },
            ],
        };
        let p = dir.join("e.csv");
        save_expert(&p, &e).unwrap();
        let loaded = load_expert(&p).unwrap();
        assert_eq!(loaded, e);
        assert!(loaded.to_transitions().is_err());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn header_only_file_loads_empty() {
        let dir = std::env::temp_dir().join(format!("bicql-ds3-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("empty.csv");
        std::fs::write(&p, "state,action,next_state\n").unwrap();
        let d = load_transitions(&p).unwrap();
        assert!(d.is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn negative_index_is_a_parse_error_with_line() {
        let dir = std::env::temp_dir().join(format!("bicql-ds4-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("bad.csv");
        std::fs::write(&p, "state,action,next_state\n0,0,1\n-3,0,1\n").unwrap();
        match load_transitions(&p) {
            Err(BicqlError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn full_batch_without_replacement_is_permutation() {
        let records: Vec<usize> = (0..17).collect();
        let mut sampler = BatchSampler::new(17, false, 3, 0);
        let mut batch = sampler.next_batch(&records).unwrap();
        batch.sort_unstable();
        assert_eq!(batch, records);
    }

    #[test]
    fn same_seed_same_stream() {
        let records: Vec<usize> = (0..100).collect();
        let mut a = BatchSampler::new(8, true, 11, 2);
        let mut b = BatchSampler::new(8, true, 11, 2);
        for _ in 0..5 {
            assert_eq!(a.next_batch(&records).unwrap(), b.next_batch(&records).unwrap());
        }
    }

    #[test]
    fn replacement_repeats_single_record() {
        let records = vec![42_usize];
        let mut sampler = BatchSampler::new(4, true, 0, 0);
        assert_eq!(sampler.next_batch(&records).unwrap(), vec![42; 4]);
    }

    #[test]
    fn empty_dataset_is_invalid_state() {
        let records: Vec<usize> = vec![];
        let mut sampler = BatchSampler::new(4, true, 0, 0);
        assert!(matches!(
            sampler.next_batch(&records),
            Err(BicqlError::InvalidState(_))
        ));
    }

    #[test]
    fn gridworld_collection_stays_in_bounds() {
        let spec = GridworldSpec {
            width: 3,
            height: 3,
            goal_cells: vec![(2, 2)],
            slip_prob: 0.1,
            step_reward: -0.01,
            goal_reward: 1.0,
            discount: 0.95,
        };
        let (mdp, _) = build_gridworld(&spec).unwrap();
        let d = collect_transitions(&mdp, &uniform_policy(9, 4), 10, 20, 0).unwrap();
        d.check_bounds(9, 4).unwrap();
    }
}
