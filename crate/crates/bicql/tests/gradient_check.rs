//! Central-finite-difference verification of every analytic gradient, over
//! seeded random instances (h = 1e-5, relative error < 1e-5).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bicql::cql::{bellman_error_loss, cql_regularizer};
use bicql::dataset::Transition;
use bicql::mdp::QTable;
use bicql::reward::reward_regression_loss;

const H: f64 = 1e-5;
const REL_TOL: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

struct Instance {
    q: QTable,
    q_target: QTable,
    reward: QTable,
    batch: Vec<Transition>,
    gamma: f64,
    alpha: f64,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.random_range(2..7);
    let n_actions = rng.random_range(2..5);
    let batch_len = rng.random_range(1..12);
    let mut table = |scale: f64| {
        let mut inner = ChaCha8Rng::seed_from_u64(rng.random());
        QTable::from_fn(n_states, n_actions, |_, _| inner.random_range(-scale..scale))
    };
    Instance {
        q: table(3.0),
        q_target: table(3.0),
        reward: table(1.0),
        batch: (0..batch_len)
            .map(|_| Transition {
                state: rng.random_range(0..n_states),
                action: rng.random_range(0..n_actions),
                next_state: rng.random_range(0..n_states),
            })
            .collect(),
        gamma: rng.random_range(0.5..0.99),
        alpha: rng.random_range(0.1..3.0),
    }
}

fn check_against_fd(
    analytic: &QTable,
    mut f: impl FnMut(&QTable) -> f64,
    at: &QTable,
    what: &str,
    seed: u64,
) {
    for s in 0..at.nrows() {
        for a in 0..at.ncols() {
            let mut plus = at.clone();
            plus[(s, a)] += H;
            let mut minus = at.clone();
            minus[(s, a)] -= H;
            let fd = (f(&plus) - f(&minus)) / (2.0 * H);
            let err = rel_err(analytic[(s, a)], fd);
            assert!(
                err < REL_TOL,
                "{what} seed {seed} cell ({s},{a}): analytic {} vs fd {fd} (rel {err:.2e})",
                analytic[(s, a)]
            );
        }
    }
}

#[test]
fn bellman_error_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let inst = random_instance(seed);
        let (_, grad) =
            bellman_error_loss(&inst.q, &inst.q_target, &inst.reward, &inst.batch, inst.gamma);
        check_against_fd(
            &grad,
            |q| bellman_error_loss(q, &inst.q_target, &inst.reward, &inst.batch, inst.gamma).0,
            &inst.q,
            "bellman",
            seed,
        );
    }
}

#[test]
fn cql_regularizer_gradient_matches_finite_differences() {
    for seed in 20..40 {
        let inst = random_instance(seed);
        let (_, grad) = cql_regularizer(&inst.q, &inst.batch, inst.alpha);
        check_against_fd(
            &grad,
            |q| cql_regularizer(q, &inst.batch, inst.alpha).0,
            &inst.q,
            "cql",
            seed,
        );
    }
}

#[test]
fn reward_regression_gradient_matches_finite_differences() {
    for seed in 40..60 {
        let inst = random_instance(seed);
        let (_, grad) = reward_regression_loss(&inst.reward, &inst.q, &inst.batch, inst.gamma);
        check_against_fd(
            &grad,
            |r| reward_regression_loss(r, &inst.q, &inst.batch, inst.gamma).0,
            &inst.reward,
            "reward",
            seed,
        );
    }
}
