mod common;

use common::{pair_quadratic, rng, simulate_bank, stacked_quadratic, system};
use minimax_bounds::backward::{build_pair, run_backward, terminal_necessary};
use minimax_bounds::bounds::{value_bound, BoundKind, BoundsOptions};
use minimax_bounds::estimator::FilterBank;
use minimax_bounds::exact::{exact_gamma, lqr_value, stacked_weights, ExactOptions};
use minimax_bounds::interpolation::simplex_grid;
use minimax_bounds::linalg::{Vector, DEFAULT_PD_TOL};
use rand::Rng;

fn coarse() -> ExactOptions {
    ExactOptions {
        theta_step: 0.02,
        ..ExactOptions::default()
    }
}

#[test]
fn exact_level_matches_dense_game() {
    for key in ['c', 'd'] {
        let (set, stat) = system(key);
        let opts = coarse();
        let grid = simplex_grid(2, opts.theta_step);
        for horizon in 1..=4 {
            let res = exact_gamma(&set, &stat, horizon, &opts).unwrap();
            let zero = vec![Vector::zeros(1), Vector::zeros(1)];
            let all_definite = |gamma: f64| {
                grid.iter().all(|theta| {
                    stacked_quadratic(&set, &stat, theta, gamma, horizon, &zero).min_eigenvalue()
                        > 0.0
                })
            };
            assert!(
                all_definite(res.gamma),
                "{key} N={horizon} at {}",
                res.gamma
            );
            let below = res.gamma - 2.0 * opts.gamma_tol;
            if below > minimax_bounds::bounds::feasibility_floor(&stat) {
                assert!(!all_definite(below), "{key} N={horizon} below {below}");
            }
        }
    }
}

#[test]
fn stacked_value_matches_dense_minimum() {
    let mut r = rng(11);
    for key in ['a', 'b', 'c', 'd'] {
        let (set, stat) = system(key);
        let x0: Vec<Vector> = (0..2)
            .map(|_| Vector::from_element(1, r.gen_range(-1.0..1.0)))
            .collect();
        for horizon in 1..=4 {
            let gamma = exact_gamma(&set, &stat, horizon, &coarse()).unwrap().gamma * 1.2;
            for theta in [[0.0, 1.0], [0.3, 0.7], [0.5, 0.5], [1.0, 0.0]] {
                let v = lqr_value(&set, &stat, &theta, gamma, horizon, &x0).unwrap();
                assert!(v.finite);
                let q = stacked_quadratic(&set, &stat, &theta, gamma, horizon, &x0);
                // J = -gamma^2 min_y (objective / gamma^2)
                let dense = -gamma * gamma * q.minimum();
                assert!(
                    (v.j - dense).abs() <= 1e-8 * (1.0 + dense.abs()),
                    "{key} N={horizon} theta={theta:?}: {} vs {dense}",
                    v.j
                );
            }
        }
    }
}

#[test]
fn equal_weights_reduce_to_the_necessary_pair() {
    for key in ['a', 'c', 'd'] {
        let (set, stat) = system(key);
        let gamma = 3.0;
        let stacked = stacked_weights(&set, &stat, &[0.5, 0.5], gamma).unwrap();
        let term = terminal_necessary(&stat, 0, 1, gamma).unwrap();
        let halved = stacked.terminal();
        let diff = (halved.as_matrix() * 2.0 - term.matrix.as_matrix()).amax();
        assert!(diff < 1e-12, "{key}: {diff}");
        let pair = build_pair(&set, &stat, 0, 1).unwrap();
        assert!((stacked.stage.q.as_matrix() * 2.0 - pair.stage().q.as_matrix()).amax() < 1e-12);
        assert!((stacked.stage.n.clone() * 2.0 - &pair.stage().n).amax() < 1e-12);
    }
}

#[test]
fn necessary_pair_matches_dense_form_near_the_threshold() {
    let (set, stat) = system('c');
    for horizon in [3, 8] {
        for gamma in [1.219, 1.222, 1.224, 1.23, 1.3] {
            let term = terminal_necessary(&stat, 0, 1, gamma).unwrap();
            let pair = build_pair(&set, &stat, 0, 1).unwrap();
            let cert = run_backward(&pair, &term, horizon, DEFAULT_PD_TOL).unwrap();
            let x0 = [Vector::zeros(1), Vector::zeros(1)];
            let q = pair_quadratic(&set, &stat, 0, 1, term.matrix.as_matrix(), horizon, &x0);
            assert_eq!(
                cert.verdict.passed(),
                q.min_eigenvalue() > 0.0,
                "N={horizon} gamma={gamma}"
            );
        }
    }
}

#[test]
fn estimator_value_respects_the_upper_value_bound() {
    let mut r = rng(13);
    let (set, stat) = system('c');
    let gamma = 2.0;
    let horizon = 6;
    let bound = value_bound(
        &set,
        &stat,
        gamma,
        horizon,
        BoundKind::Upper,
        &BoundsOptions::default(),
    )
    .unwrap();
    for _ in 0..20 {
        let mut bank = FilterBank::from_model_set(&set, &stat, gamma).unwrap();
        for _ in 0..horizon {
            bank = bank
                .step(&Vector::from_element(1, r.gen_range(-2.0..2.0)))
                .unwrap();
        }
        let rep = bank.estimate().unwrap();
        assert!(
            rep.game_value <= bound.value + 1e-9,
            "{} > {}",
            rep.game_value,
            bound.value
        );
    }
}

#[test]
fn filter_bank_matches_direct_simulation() {
    let mut r = rng(17);
    let (set, stat) = system('d');
    let ys: Vec<Vector> = (0..12)
        .map(|_| Vector::from_element(1, r.gen_range(-1.0..1.0)))
        .collect();
    let mut bank = FilterBank::from_model_set(&set, &stat, 3.0).unwrap();
    for y in &ys {
        bank = bank.step(y).unwrap();
    }
    let (xs, cs) = simulate_bank(&set, &stat, &[0, 1], &set.x0_hats(), &ys);
    for k in 0..2 {
        assert!((bank.filter_states()[k][0] - xs[k][0]).abs() < 1e-12);
        assert!((bank.residual_costs()[k] - cs[k]).abs() < 1e-12);
    }
}
