//! Exact game value and exact optimal performance level for small model sets.
//!
//! For fixed simplex weights `theta` the worst-case output sequence solves a
//! linear-quadratic problem on the stacked filter bank
//! `x+ = diag(F_i - K_i H_i) x + [K_1; ...; K_M] y` with stage cost
//! `sum_i theta_i |H_i x_i - y|^2_{R~_i^-1}` and the indefinite terminal
//! penalty `-Q~_N / gamma^2`, where
//!
//! ```text
//! Q~_N = diag(theta_i Q_N,i) - [theta_i Q_N,i]_i S^-1 [theta_i Q_N,i]_i^T,
//! Q_N,i = (I - gamma^-2 P_i)^-1,   S = sum_i theta_i Q_N,i.
//! ```
//!
//! The game value is finite iff the backward recursion keeps `X_t` positive
//! definite for every `theta`; `gamma*_N` is the smallest such `gamma`, found
//! by bisection with `theta` restricted to a grid.

use rayon::prelude::*;

use crate::backward::{check_feasible, run_stage, LqrStage, StageRun};
use crate::bounds::{bisect_threshold, feasibility_floor, Search, DEFAULT_CAP, DEFAULT_GAMMA_TOL};
use crate::error::{Error, Result};
use crate::forward::StationarySolution;
use crate::interpolation::{check_simplex, simplex_grid, DEFAULT_THETA_STEP};
use crate::linalg::{
    block_diag, hstack, vstack, vstack_vectors, Matrix, SymMatrix, Vector, DEFAULT_PD_TOL,
};
use crate::model::ValidatedModelSet;

/// Terminal weight `Q_N,i = (I - gamma^-2 P_i)^-1` of every model.
pub fn terminal_weights(stat: &[StationarySolution], gamma: f64) -> Result<Vec<SymMatrix>> {
    check_feasible(stat, gamma)?;
    stat.iter()
        .map(|s| {
            let n = s.p.dim();
            (&SymMatrix::identity(n) - &s.p.scale(1.0 / (gamma * gamma)))
                .spd_inverse()
                .ok_or(Error::InfeasibleGamma {
                    gamma,
                    floor: feasibility_floor(stat),
                })
        })
        .collect()
}

/// Stacked filter bank and its one-step and terminal weights at `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedSystem {
    pub theta: Vec<f64>,
    pub gamma: f64,
    pub stage: LqrStage,
    /// Terminal weight `Q~_N`; the recursion starts from `-Q~_N / gamma^2`.
    pub qn: SymMatrix,
}

impl StackedSystem {
    pub fn terminal(&self) -> SymMatrix {
        self.qn.scale(-1.0 / (self.gamma * self.gamma))
    }
}

pub fn stacked_weights(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    theta: &[f64],
    gamma: f64,
) -> Result<StackedSystem> {
    let m = set.len();
    if theta.len() != m || stat.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} weights, {} stationary solutions for {m} models",
            theta.len(),
            stat.len()
        )));
    }
    check_simplex(theta)?;
    let qns = terminal_weights(stat, gamma)?;
    stacked_with_weights(set, stat, theta, gamma, &qns)
}

fn stacked_with_weights(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    theta: &[f64],
    gamma: f64,
    qns: &[SymMatrix],
) -> Result<StackedSystem> {
    let n = set.state_dim();
    let models = set.models();

    let closed: Vec<Matrix> = models
        .iter()
        .zip(stat)
        .map(|(md, s)| s.closed_loop(md))
        .collect();
    let gains: Vec<&Matrix> = stat.iter().map(|s| &s.k).collect();
    let f = block_diag(&closed.iter().collect::<Vec<_>>());
    let k = vstack(&gains);

    let weighted_h: Vec<Matrix> = models
        .iter()
        .zip(stat)
        .zip(theta)
        .map(|((md, s), t)| s.rtilde_inv.as_matrix() * &md.h * *t)
        .collect();
    let q_blocks: Vec<Matrix> = models
        .iter()
        .zip(&weighted_h)
        .map(|(md, wh)| md.h.transpose() * wh)
        .collect();
    let q = SymMatrix::new(block_diag(&q_blocks.iter().collect::<Vec<_>>()));
    let n_cross = -hstack(&weighted_h.iter().collect::<Vec<_>>());
    let mut r = Matrix::zeros(set.output_dim(), set.output_dim());
    for (s, t) in stat.iter().zip(theta) {
        r += s.rtilde_inv.as_matrix() * *t;
    }

    let scaled: Vec<Matrix> = qns
        .iter()
        .zip(theta)
        .map(|(qn, t)| qn.as_matrix() * *t)
        .collect();
    let mut s = Matrix::zeros(n, n);
    for w in &scaled {
        s += w;
    }
    let s_inv = SymMatrix::new(s).spd_inverse().ok_or(Error::SingularSum)?;
    let column = vstack(&scaled.iter().collect::<Vec<_>>());
    let qn = block_diag(&scaled.iter().collect::<Vec<_>>())
        - &column * s_inv.as_matrix() * column.transpose();

    Ok(StackedSystem {
        theta: theta.to_vec(),
        gamma,
        stage: LqrStage {
            f,
            k,
            q,
            n: n_cross,
            r: SymMatrix::new(r),
        },
        qn: SymMatrix::new(qn),
    })
}

/// Outcome of the stacked recursion at one `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrValue {
    pub finite: bool,
    /// `-gamma^2 |x0|^2_{T~_0}`; `+inf` when the recursion fails.
    pub j: f64,
    pub t0: Option<SymMatrix>,
}

/// Runs the stacked recursion for `horizon` steps and evaluates the value at
/// the stacked initial estimates `x0_hats`.
pub fn lqr_value_stacked(
    stacked: &StackedSystem,
    horizon: usize,
    x0_hats: &[Vector],
    pd_tol: f64,
) -> Result<LqrValue> {
    let StageRun { t0, .. } = run_stage(&stacked.stage, &stacked.terminal(), horizon, pd_tol)?;
    Ok(match t0 {
        Some(t0) => {
            let x0 = vstack_vectors(&x0_hats.iter().collect::<Vec<_>>());
            if x0.len() != t0.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "stacked estimate has length {}, expected {}",
                    x0.len(),
                    t0.dim()
                )));
            }
            let g2 = stacked.gamma * stacked.gamma;
            LqrValue {
                finite: true,
                j: -g2 * t0.quad_form(&x0),
                t0: Some(t0),
            }
        }
        None => LqrValue {
            finite: false,
            j: f64::INFINITY,
            t0: None,
        },
    })
}

pub fn lqr_value(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    theta: &[f64],
    gamma: f64,
    horizon: usize,
    x0_hats: &[Vector],
) -> Result<LqrValue> {
    let stacked = stacked_weights(set, stat, theta, gamma)?;
    lqr_value_stacked(&stacked, horizon, x0_hats, DEFAULT_PD_TOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactOptions {
    pub gamma_tol: f64,
    pub theta_step: f64,
    pub cap: f64,
    pub pd_tol: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            gamma_tol: DEFAULT_GAMMA_TOL,
            theta_step: DEFAULT_THETA_STEP,
            cap: DEFAULT_CAP,
            pd_tol: DEFAULT_PD_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactValueResult {
    pub horizon: usize,
    /// Smallest `gamma` (upper end of the final bisection bracket) at which
    /// every grid point keeps the stacked recursion definite.
    pub gamma: f64,
    pub theta_grid_step: f64,
    pub finite: bool,
    /// `max_theta -gamma^2 |x0|^2_{T~_0(theta)}` over the grid at `gamma`.
    pub j: f64,
    pub argmax_theta: Vec<f64>,
}

/// Whether every grid point yields a finite value at `gamma`.
pub fn finite_on_grid(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    grid: &[Vec<f64>],
    gamma: f64,
    horizon: usize,
    pd_tol: f64,
) -> Result<bool> {
    let qns = terminal_weights(stat, gamma)?;
    let failed = grid.par_iter().any(|theta| {
        let ok = stacked_with_weights(set, stat, theta, gamma, &qns).and_then(|s| {
            run_stage(&s.stage, &s.terminal(), horizon, pd_tol).map(|r| r.t0.is_some())
        });
        !matches!(ok, Ok(true))
    });
    Ok(!failed)
}

/// Grid maximum of `J_N(theta, x0_hat)` at a fixed `gamma`.
pub fn grid_value(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    grid: &[Vec<f64>],
    gamma: f64,
    horizon: usize,
    pd_tol: f64,
) -> Result<(f64, Vec<f64>)> {
    let x0 = set.x0_hats();
    let values: Vec<(f64, Vec<f64>)> = grid
        .par_iter()
        .map(|theta| {
            let stacked = stacked_weights(set, stat, theta, gamma)?;
            let v = lqr_value_stacked(&stacked, horizon, &x0, pd_tol)?;
            Ok((v.j, theta.clone()))
        })
        .collect::<Result<_>>()?;
    values
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .ok_or(Error::EmptySet)
}

/// `gamma*_N` for sets of at most two models, bisected to `gamma_tol` with
/// the simplex gridded at `theta_step`.
pub fn exact_gamma(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    opts: &ExactOptions,
) -> Result<ExactValueResult> {
    if set.len() > 2 {
        return Err(Error::UnsupportedM(set.len()));
    }
    let grid = simplex_grid(set.len(), opts.theta_step);
    let floor = feasibility_floor(stat);
    let pred = |g: f64| finite_on_grid(set, stat, &grid, g, horizon, opts.pd_tol);
    let gamma = match bisect_threshold(floor, opts.gamma_tol, opts.cap, pred)? {
        Search::AtStart(g) => g,
        Search::Bracket { hi, .. } => hi,
        Search::Capped => return Err(Error::NoUpperBound { cap: opts.cap }),
    };
    let (j, argmax_theta) = grid_value(set, stat, &grid, gamma, horizon, opts.pd_tol)?;
    Ok(ExactValueResult {
        horizon,
        gamma,
        theta_grid_step: opts.theta_step,
        finite: j.is_finite(),
        j,
        argmax_theta,
    })
}

/// `exact_gamma` repeated for several grid spacings, as `(step, gamma)`.
pub fn theta_step_sensitivity(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    horizon: usize,
    opts: &ExactOptions,
    steps: &[f64],
) -> Result<Vec<(f64, f64)>> {
    steps
        .iter()
        .map(|&step| {
            let o = ExactOptions {
                theta_step: step,
                ..opts.clone()
            };
            exact_gamma(set, stat, horizon, &o).map(|r| (step, r.gamma))
        })
        .collect()
}
