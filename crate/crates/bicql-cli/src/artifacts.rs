//! On-disk artifacts: the MDP dump, learned tables, reward snapshots and the
//! evaluation / diagnostics reports. All numeric CSV output prints 17
//! significant digits so that re-runs can be compared byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use bicql::error::{BicqlError, Result};
use bicql::eval::EvalReport;
use bicql::mdp::{FiniteMdp, RewardTable};
use bicql::nalgebra::{DMatrix, DVector};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> BicqlError {
    BicqlError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub const MDP_HEADER: &str = "record,i,j,k,value";

/// Writes the environment dump: shape, discount, initial distribution,
/// non-zero transition entries and the true reward table.
pub fn write_mdp(path: &Path, mdp: &FiniteMdp, true_reward: &RewardTable) -> Result<()> {
    let (n_states, n_actions) = mdp.shape();
    let mut out = String::new();
    out.push_str(MDP_HEADER);
    out.push('\n');
    let _ = writeln!(out, "shape,{n_states},{n_actions},,");
    let _ = writeln!(out, "discount,,,,{}", fmt(mdp.discount()));
    for s in 0..n_states {
        let _ = writeln!(out, "initial,{s},,,{}", fmt(mdp.initial_dist()[s]));
    }
    for a in 0..n_actions {
        for s in 0..n_states {
            for s2 in 0..n_states {
                let p = mdp.prob(s, a, s2);
                if p != 0.0 {
                    let _ = writeln!(out, "transition,{s},{a},{s2},{}", fmt(p));
                }
            }
        }
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            let _ = writeln!(out, "reward,{s},{a},,{}", fmt(true_reward[(s, a)]));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the environment dump back.
pub fn load_mdp(path: &Path) -> Result<(FiniteMdp, RewardTable)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if header.trim() != MDP_HEADER {
        return Err(parse_err(path, 1, format!("unexpected header '{header}'")));
    }

    let mut shape: Option<(usize, usize)> = None;
    let mut discount: Option<f64> = None;
    let mut initial: Vec<(usize, f64)> = Vec::new();
    let mut transitions: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut rewards: Vec<(usize, usize, f64)> = Vec::new();

    for (idx, raw) in lines {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(|f| f.trim()).collect();
        if fields.len() != 5 {
            return Err(parse_err(path, lineno, format!("expected 5 fields, found {}", fields.len())));
        }
        let idx_field = |i: usize, what: &str| -> Result<usize> {
            fields[i]
                .parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("cannot parse {what} from '{}'", fields[i])))
        };
        let val_field = || -> Result<f64> {
            fields[4]
                .parse::<f64>()
                .map_err(|_| parse_err(path, lineno, format!("cannot parse value from '{}'", fields[4])))
        };
        match fields[0] {
            "shape" => shape = Some((idx_field(1, "n_states")?, idx_field(2, "n_actions")?)),
            "discount" => discount = Some(val_field()?),
            "initial" => initial.push((idx_field(1, "state")?, val_field()?)),
            "transition" => transitions.push((
                idx_field(1, "state")?,
                idx_field(2, "action")?,
                idx_field(3, "next state")?,
                val_field()?,
            )),
            "reward" => rewards.push((idx_field(1, "state")?, idx_field(2, "action")?, val_field()?)),
            other => return Err(parse_err(path, lineno, format!("unknown record '{other}'"))),
        }
    }

    let (n_states, n_actions) =
        shape.ok_or_else(|| parse_err(path, 1, "missing shape record"))?;
    let discount = discount.ok_or_else(|| parse_err(path, 1, "missing discount record"))?;
    let mut init = DVector::<f64>::zeros(n_states);
    for (s, p) in initial {
        init[s] = p;
    }
    let mut matrices = vec![DMatrix::<f64>::zeros(n_states, n_states); n_actions];
    for (s, a, s2, p) in transitions {
        matrices[a][(s, s2)] = p;
    }
    let mut reward = RewardTable::zeros(n_states, n_actions);
    for (s, a, r) in rewards {
        reward[(s, a)] = r;
    }
    let mdp = FiniteMdp::new(matrices, init, discount)?;
    Ok((mdp, reward))
}

pub const TABLE_HEADER: &str = "state,action,value";

pub fn write_table(path: &Path, table: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for s in 0..table.nrows() {
        for a in 0..table.ncols() {
            let _ = writeln!(out, "{s},{a},{}", fmt(table[(s, a)]));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_table(path: &Path, n_states: usize, n_actions: usize) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if header.trim() != TABLE_HEADER {
        return Err(parse_err(path, 1, format!("unexpected header '{header}'")));
    }
    let mut table = DMatrix::<f64>::zeros(n_states, n_actions);
    for (idx, raw) in lines {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(|f| f.trim()).collect();
        if fields.len() != 3 {
            return Err(parse_err(path, lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let s = fields[0]
            .parse::<usize>()
            .map_err(|_| parse_err(path, lineno, format!("bad state '{}'", fields[0])))?;
        let a = fields[1]
            .parse::<usize>()
            .map_err(|_| parse_err(path, lineno, format!("bad action '{}'", fields[1])))?;
        let v = fields[2]
            .parse::<f64>()
            .map_err(|_| parse_err(path, lineno, format!("bad value '{}'", fields[2])))?;
        if s >= n_states || a >= n_actions {
            return Err(parse_err(path, lineno, format!("cell ({s},{a}) outside {n_states}x{n_actions}")));
        }
        table[(s, a)] = v;
    }
    Ok(table)
}

pub const SNAPSHOT_HEADER: &str = "iter,state,action,value";

pub fn write_snapshots(path: &Path, snapshots: &[RewardTable]) -> Result<()> {
    let mut out = String::new();
    out.push_str(SNAPSHOT_HEADER);
    out.push('\n');
    for (i, snap) in snapshots.iter().enumerate() {
        for s in 0..snap.nrows() {
            for a in 0..snap.ncols() {
                let _ = writeln!(out, "{},{s},{a},{}", i + 1, fmt(snap[(s, a)]));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_snapshots(path: &Path, n_states: usize, n_actions: usize) -> Result<Vec<RewardTable>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    if header.trim() != SNAPSHOT_HEADER {
        return Err(parse_err(path, 1, format!("unexpected header '{header}'")));
    }
    let mut snapshots: Vec<RewardTable> = Vec::new();
    for (idx, raw) in lines {
        let lineno = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').map(|f| f.trim()).collect();
        if fields.len() != 4 {
            return Err(parse_err(path, lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let parse_usize = |i: usize| -> Result<usize> {
            fields[i]
                .parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("bad integer '{}'", fields[i])))
        };
        let iter = parse_usize(0)?;
        let s = parse_usize(1)?;
        let a = parse_usize(2)?;
        let v = fields[3]
            .parse::<f64>()
            .map_err(|_| parse_err(path, lineno, format!("bad value '{}'", fields[3])))?;
        if iter == 0 || iter > snapshots.len() + 1 {
            return Err(parse_err(path, lineno, format!("snapshot iter {iter} out of order")));
        }
        if iter == snapshots.len() + 1 {
            snapshots.push(RewardTable::zeros(n_states, n_actions));
        }
        snapshots[iter - 1][(s, a)] = v;
    }
    Ok(snapshots)
}

/// One evaluation row; columns for absent statistics are left empty, and the
/// bc_return column exists only when the BC baseline is enabled.
pub fn eval_csv_header(with_bc: bool) -> String {
    let bc = if with_bc { "bc_return," } else { "" };
    format!(
        "seed,learned_return,expert_return,{bc}normalized_score,expert_greedy_fraction,reward_pearson,covered_cells,convergence_outer_iters"
    )
}

pub fn eval_csv_row(seed: u64, report: &EvalReport, with_bc: bool) -> String {
    let mut fields = vec![
        seed.to_string(),
        fmt(report.learned_return),
        fmt(report.expert_return),
    ];
    if with_bc {
        fields.push(report.bc_return.map(fmt).unwrap_or_default());
    }
    fields.push(report.normalized_score.map(fmt).unwrap_or_default());
    fields.push(fmt(report.expert_greedy_fraction));
    fields.push(report.reward_pearson.map(fmt).unwrap_or_default());
    fields.push(report.reward_covered_cells.to_string());
    fields.push(
        report
            .convergence_outer_iters
            .map(|v| v.to_string())
            .unwrap_or_default(),
    );
    fields.join(",")
}

/// The same report as a flat `key = value` text block.
pub fn eval_text(seed: u64, report: &EvalReport, with_bc: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "learned_return = {}", fmt(report.learned_return));
    let _ = writeln!(out, "expert_return = {}", fmt(report.expert_return));
    if with_bc {
        let _ = writeln!(
            out,
            "bc_return = {}",
            report.bc_return.map(fmt).unwrap_or_else(|| "absent".into())
        );
    }
    let _ = writeln!(
        out,
        "normalized_score = {}",
        report.normalized_score.map(fmt).unwrap_or_else(|| "absent".into())
    );
    let _ = writeln!(
        out,
        "expert_greedy_fraction = {}",
        fmt(report.expert_greedy_fraction)
    );
    let _ = writeln!(
        out,
        "reward_pearson = {}",
        report.reward_pearson.map(fmt).unwrap_or_else(|| "absent".into())
    );
    let _ = writeln!(out, "covered_cells = {}", report.reward_covered_cells);
    let _ = writeln!(
        out,
        "convergence_outer_iters = {}",
        report
            .convergence_outer_iters
            .map(|v| v.to_string())
            .unwrap_or_else(|| "absent".into())
    );
    out
}

pub const DIAG_HEADER: &str =
    "seed,lower_residual,upper_residual,tail_median_ratio,tail_max_ratio,within_thresholds";

pub struct DiagRow {
    pub seed: u64,
    pub lower_residual: f64,
    pub upper_residual: f64,
    pub contraction: Option<(f64, f64)>,
    pub within_thresholds: bool,
}

pub fn diag_csv_row(row: &DiagRow) -> String {
    let (median, max) = match row.contraction {
        Some((m, x)) => (fmt(m), fmt(x)),
        None => (String::new(), String::new()),
    };
    format!(
        "{},{},{},{median},{max},{}",
        row.seed,
        fmt(row.lower_residual),
        fmt(row.upper_residual),
        row.within_thresholds
    )
}
