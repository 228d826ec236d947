//! Closed-form quadratic interpolation and the min-max combination of
//! per-model quadratics.
//!
//! The min-max problem `min_x max_i |x - c_i|^2_{Q_i} - p_i` is solved through
//! its dual over the probability simplex,
//!
//! ```text
//! g(theta) = min_x sum_i theta_i (|x - c_i|^2_{Q_i} - p_i),
//! ```
//!
//! which is concave in `theta` with partial derivatives `f_i(x(theta))`.
//! A grid over the simplex gives a starting point; pairwise mass transfers
//! between the largest and the smallest active quadratic then drive the
//! active quadratics to a common value.

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, Matrix, SymMatrix, Vector};

pub const DEFAULT_THETA_STEP: f64 = 1e-3;

/// Minimizer and value of `sum_k |x - z_k|^2_{Z_k}`.
///
/// Uses `x* = (sum Z_k)^-1 sum Z_k z_k` and
/// `min = sum |z_k|^2_{Z_k} - |sum Z_k z_k|^2_{(sum Z_k)^-1}`. The individual
/// `Z_k` need only be symmetric; their sum must be positive definite.
pub fn interpolate_min(zs: &[Vector], weights: &[SymMatrix]) -> Result<(Vector, f64)> {
    if zs.is_empty() || zs.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} centers and {} weights",
            zs.len(),
            weights.len()
        )));
    }
    let n = zs[0].len();
    let mut sum = Matrix::zeros(n, n);
    let mut moment = Vector::zeros(n);
    let mut spread = 0.0;
    for (z, w) in zs.iter().zip(weights) {
        if z.len() != n || w.dim() != n {
            return Err(Error::DimensionMismatch(
                "interpolation centers and weights".into(),
            ));
        }
        let wz = w.as_matrix() * z;
        sum += w.as_matrix();
        spread += z.dot(&wz);
        moment += wz;
    }
    let chol = sum.cholesky().ok_or(Error::SingularSum)?;
    let x = chol.solve(&moment);
    let value = spread - moment.dot(&x);
    Ok((x, value))
}

/// Right-hand side of the weighted-quadratic identity
///
/// ```text
/// min_v sum theta_i |v - x_i|^2_{X_i^-1}
///   = sum_i theta_i ( |X_i^-1 x_i|^2_{X_i - S^-1}
///                     + 1/2 sum_j theta_j |X_i^-1 x_i - X_j^-1 x_j|^2_{S^-1} )
/// ```
///
/// with `S = sum theta_i X_i^-1`. Requires `X_i` positive definite and
/// `theta` strictly positive summing to one.
pub fn quad_prog_value(xs: &[Vector], mats: &[SymMatrix], theta: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != mats.len() || xs.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} points, {} matrices, {} weights",
            xs.len(),
            mats.len(),
            theta.len()
        )));
    }
    check_open_simplex(theta)?;
    let n = xs[0].len();
    let mut inverses = Vec::with_capacity(mats.len());
    for (idx, (x, m)) in xs.iter().zip(mats).enumerate() {
        if x.len() != n || m.dim() != n {
            return Err(Error::DimensionMismatch("quadratic program data".into()));
        }
        if !is_positive_definite(m, 0.0)? {
            return Err(Error::NotPositiveDefinite {
                model: idx,
                matrix: "X",
            });
        }
        inverses.push(m.spd_inverse().ok_or(Error::NotPositiveDefinite {
            model: idx,
            matrix: "X",
        })?);
    }
    let mut s = Matrix::zeros(n, n);
    for (t, inv) in theta.iter().zip(&inverses) {
        s += inv.as_matrix() * *t;
    }
    let s_inv = SymMatrix::new(s).spd_inverse().ok_or(Error::SingularSum)?;
    let us: Vec<Vector> = xs
        .iter()
        .zip(&inverses)
        .map(|(x, inv)| inv.as_matrix() * x)
        .collect();
    let mut total = 0.0;
    for i in 0..xs.len() {
        let own = SymMatrix::new(mats[i].as_matrix() - s_inv.as_matrix()).quad_form(&us[i]);
        let mut cross = 0.0;
        for j in 0..xs.len() {
            cross += theta[j] * s_inv.quad_form(&(&us[i] - &us[j]));
        }
        total += theta[i] * (own + 0.5 * cross);
    }
    Ok(total)
}

fn check_open_simplex(theta: &[f64]) -> Result<()> {
    let sum: f64 = theta.iter().sum();
    if theta.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::DegenerateTheta(format!("{theta:?}")));
    }
    Ok(())
}

/// Checks that `theta` lies on the closed simplex.
pub fn check_simplex(theta: &[f64]) -> Result<()> {
    let sum: f64 = theta.iter().sum();
    if theta.is_empty()
        || theta.iter().any(|t| !(*t >= 0.0 && *t <= 1.0))
        || (sum - 1.0).abs() > 1e-12
    {
        return Err(Error::DegenerateTheta(format!("{theta:?}")));
    }
    Ok(())
}

/// Regular grid on the closed probability simplex in `m` coordinates with
/// spacing `step`, vertices included. For `m = 2` the first coordinate runs
/// `0, step, 2 step, ..., 1`.
pub fn simplex_grid(m: usize, step: f64) -> Vec<Vec<f64>> {
    if m == 0 {
        return Vec::new();
    }
    let divisions = (1.0 / step).round().max(1.0) as usize;
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    fill_grid(&mut out, &mut counts, 0, divisions, divisions);
    out
}

fn fill_grid(
    out: &mut Vec<Vec<f64>>,
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    divisions: usize,
) {
    let m = counts.len();
    if pos == m - 1 {
        counts[pos] = remaining;
        out.push(
            counts
                .iter()
                .map(|&c| c as f64 / divisions as f64)
                .collect(),
        );
        return;
    }
    for c in 0..=remaining {
        counts[pos] = c;
        fill_grid(out, counts, pos + 1, remaining - c, divisions);
    }
}

/// Solution of the min-max combination problem.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxSolution {
    pub x_hat: Vector,
    /// `max_i f_i(x_hat)`.
    pub value: f64,
    /// Dual weights at the optimum.
    pub theta: Vec<f64>,
    /// `f_i(x_hat) = |x_hat - c_i|^2_{Q_i} - p_i` for every model.
    pub per_model: Vec<f64>,
    /// Dual objective `g(theta)` at the returned weights.
    pub dual_value: f64,
}

struct MinimaxProblem<'a> {
    centers: &'a [Vector],
    weights: &'a [SymMatrix],
    penalties: &'a [f64],
}

impl MinimaxProblem<'_> {
    fn objectives(&self, x: &Vector) -> Vec<f64> {
        self.centers
            .iter()
            .zip(self.weights)
            .zip(self.penalties)
            .map(|((c, w), p)| w.quad_form(&(x - c)) - p)
            .collect()
    }

    /// Minimizer of the `theta`-weighted sum; the vertex case returns the
    /// center itself so that single-model problems are reproduced exactly.
    fn argmin(&self, theta: &[f64]) -> Result<Vector> {
        let active: Vec<usize> = (0..theta.len()).filter(|&i| theta[i] > 0.0).collect();
        if active.len() == 1 {
            return Ok(self.centers[active[0]].clone());
        }
        let n = self.centers[0].len();
        let mut sum = Matrix::zeros(n, n);
        let mut moment = Vector::zeros(n);
        for &i in &active {
            let w = self.weights[i].as_matrix() * theta[i];
            moment += &w * &self.centers[i];
            sum += w;
        }
        let chol = sum.cholesky().ok_or(Error::SingularSum)?;
        Ok(chol.solve(&moment))
    }

    fn dual(&self, theta: &[f64]) -> Result<(f64, Vec<f64>, Vector)> {
        let x = self.argmin(theta)?;
        let f = self.objectives(&x);
        let g = theta.iter().zip(&f).map(|(t, v)| t * v).sum();
        Ok((g, f, x))
    }

    /// Moves weight from `from` to `to` until their objectives agree or
    /// `from` is exhausted.
    fn transfer(&self, theta: &mut [f64], to: usize, from: usize) -> Result<()> {
        let base = theta.to_vec();
        let at = |delta: f64| -> Vec<f64> {
            let mut t = base.clone();
            t[to] += delta;
            t[from] -= delta;
            if t[from] < 0.0 {
                t[from] = 0.0;
            }
            t
        };
        let slope = |delta: f64| -> Result<f64> {
            let t = at(delta);
            let x = self.argmin(&t)?;
            let f = self.objectives(&x);
            Ok(f[to] - f[from])
        };
        let limit = base[from];
        if slope(limit)? >= 0.0 {
            theta[to] += limit;
            theta[from] = 0.0;
            return Ok(());
        }
        let (mut lo, mut hi) = (0.0, limit);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let delta = 0.5 * (lo + hi);
        let t = at(delta);
        theta.copy_from_slice(&t);
        Ok(())
    }
}

fn grid_for(m: usize, step: f64) -> Vec<Vec<f64>> {
    if m <= 2 {
        return simplex_grid(m, step);
    }
    // keep the warm-start grid to a few thousand points
    let mut divisions = (1.0 / step).round().max(1.0) as usize;
    let count = |d: usize| -> f64 {
        // C(d + m - 1, m - 1)
        (1..m).fold(1.0, |acc, k| acc * (d + k) as f64 / k as f64)
    };
    while divisions > 1 && count(divisions) > 5000.0 {
        divisions /= 2;
    }
    simplex_grid(m, 1.0 / divisions as f64)
}

/// Solves `min_x max_i |x - c_i|^2_{Q_i} - p_i` for positive definite `Q_i`.
///
/// The simplex is gridded with spacing `theta_step` (coarsened for more than
/// two models) and the best grid point is refined until the active
/// objectives agree to within `1e-12 (1 + |value|)`.
pub fn minimax_interpolation(
    centers: &[Vector],
    weights: &[SymMatrix],
    penalties: &[f64],
    theta_step: f64,
) -> Result<MinimaxSolution> {
    let m = centers.len();
    if m == 0 || weights.len() != m || penalties.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} centers, {} weights, {} penalties",
            m,
            weights.len(),
            penalties.len()
        )));
    }
    if !(theta_step > 0.0 && theta_step <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta step {theta_step}")));
    }
    for (idx, w) in weights.iter().enumerate() {
        if !is_positive_definite(w, 0.0)? {
            return Err(Error::NotPositiveDefinite {
                model: idx,
                matrix: "Q",
            });
        }
    }
    let problem = MinimaxProblem {
        centers,
        weights,
        penalties,
    };

    let mut theta = if m == 1 {
        vec![1.0]
    } else {
        let mut best: Option<(f64, Vec<f64>)> = None;
        for t in grid_for(m, theta_step) {
            let (g, _, _) = problem.dual(&t)?;
            if best.as_ref().map_or(true, |(bg, _)| g > *bg) {
                best = Some((g, t));
            }
        }
        best.map(|(_, t)| t)
            .unwrap_or_else(|| vec![1.0 / m as f64; m])
    };

    for _ in 0..10_000 {
        let (_, f, _) = problem.dual(&theta)?;
        let top = (0..m).max_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap_or(0);
        let bottom = (0..m)
            .filter(|&i| theta[i] > 0.0)
            .min_by(|&a, &b| f[a].total_cmp(&f[b]))
            .unwrap_or(top);
        let gap = f[top] - f[bottom];
        if top == bottom || gap <= 1e-12 * (1.0 + f[top].abs()) {
            break;
        }
        let before = theta.clone();
        problem.transfer(&mut theta, top, bottom)?;
        if theta == before {
            break;
        }
    }

    let (dual_value, per_model, x_hat) = problem.dual(&theta)?;
    let value = per_model.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MinimaxSolution {
        x_hat,
        value,
        theta,
        per_model,
        dual_value,
    })
}
