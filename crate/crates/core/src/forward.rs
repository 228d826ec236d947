//! Forward (Kalman) Riccati recursion and its stationary solution.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, SymMatrix};
use crate::model::{ValidatedModel, ValidatedModelSet};

pub const DEFAULT_STATIONARY_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Stationary error weight `P`, gain `K` and innovation weight
/// `R~ = R + H P H^T` of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct StationarySolution {
    pub p: SymMatrix,
    pub k: Matrix,
    pub rtilde: SymMatrix,
    pub rtilde_inv: SymMatrix,
    /// `max |P_next - P|` at the returned `P`.
    pub residual: f64,
    pub iterations: usize,
}

impl StationarySolution {
    /// Closed-loop matrix `F - K H` of the stationary filter.
    pub fn closed_loop(&self, model: &ValidatedModel) -> Matrix {
        &model.f - &self.k * &model.h
    }
}

/// One step of the predictive Riccati recursion.
///
/// Returns `K = F P H^T (R + H P H^T)^-1` and
/// `P_next = Q + F P F^T - K (R + H P H^T) K^T`.
pub fn riccati_step(model: &ValidatedModel, p: &SymMatrix) -> Result<(Matrix, SymMatrix)> {
    let (k, _, p_next) = riccati_parts(model, p)?;
    Ok((k, p_next))
}

fn riccati_parts(model: &ValidatedModel, p: &SymMatrix) -> Result<(Matrix, SymMatrix, SymMatrix)> {
    let (f, h) = (&model.f, &model.h);
    let p = p.as_matrix();
    let innovation = SymMatrix::new(model.r.as_matrix() + h * p * h.transpose());
    let inv = innovation.spd_inverse().ok_or(Error::SingularInnovation)?;
    let k = f * p * h.transpose() * inv.as_matrix();
    let p_next =
        model.q.as_matrix() + f * p * f.transpose() - &k * innovation.as_matrix() * k.transpose();
    Ok((k, innovation, SymMatrix::new(p_next)))
}

fn max_abs_diff(a: &SymMatrix, b: &SymMatrix) -> f64 {
    (a.as_matrix() - b.as_matrix()).amax()
}

/// Fixed-point iteration of [`riccati_step`] from `P = Q` until
/// `max |P_next - P| <= tol`.
pub fn solve_stationary(
    model: &ValidatedModel,
    tol: f64,
    max_iter: usize,
) -> Result<StationarySolution> {
    solve_indexed(0, model, tol, max_iter)
}

fn solve_indexed(
    index: usize,
    model: &ValidatedModel,
    tol: f64,
    max_iter: usize,
) -> Result<StationarySolution> {
    let mut p = model.q.clone();
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let (_, p_next) = riccati_step(model, &p)?;
        residual = max_abs_diff(&p_next, &p);
        if !residual.is_finite() || !p_next.is_finite() {
            return Err(Error::NoConvergence {
                model: index,
                iterations: iter,
                residual,
            });
        }
        p = p_next;
        if residual <= tol {
            let (k, rtilde, _) = riccati_parts(model, &p)?;
            let rtilde_inv = rtilde.spd_inverse().ok_or(Error::SingularInnovation)?;
            return Ok(StationarySolution {
                p,
                k,
                rtilde,
                rtilde_inv,
                residual,
                iterations: iter,
            });
        }
    }
    Err(Error::NoConvergence {
        model: index,
        iterations: max_iter,
        residual,
    })
}

/// [`solve_stationary`] for every model, in model order.
pub fn solve_all_stationary(
    set: &ValidatedModelSet,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<StationarySolution>> {
    set.models()
        .iter()
        .enumerate()
        .map(|(i, m)| solve_indexed(i, m, tol, max_iter))
        .collect()
}

/// Same as [`solve_all_stationary`] with the default tolerance and
/// iteration budget.
pub fn stationary_defaults(set: &ValidatedModelSet) -> Result<Vec<StationarySolution>> {
    solve_all_stationary(set, DEFAULT_STATIONARY_TOL, DEFAULT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_PD_TOL;
    use crate::model::{table1_system, ModelSet, SystemModel};

    fn scalar(f: f64, h: f64) -> ValidatedModel {
        ModelSet::new(vec![SystemModel::scalar(f, h, 1.0, 1.0)])
            .validate(DEFAULT_PD_TOL)
            .unwrap()
            .models()[0]
            .clone()
    }

    /// Positive root of `H^2 P^2 - (H^2 Q + R (F^2 - 1)) P - Q R = 0`.
    fn scalar_oracle(f: f64, h: f64, q: f64, r: f64) -> f64 {
        let a = h * h;
        let b = -(h * h * q + r * (f * f - 1.0));
        let c = -q * r;
        (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
    }

    #[test]
    fn step_from_zero_leaves_q() {
        let (k, p) = riccati_step(&scalar(1.1, 1.0), &SymMatrix::zeros(1)).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
        assert_eq!(p.as_matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn step_with_zero_dynamics() {
        let (k, p) = riccati_step(&scalar(0.0, 3.0), &SymMatrix::from_scalar(5.0)).unwrap();
        assert_eq!(k[(0, 0)], 0.0);
        assert_eq!(p.as_matrix()[(0, 0)], 1.0);
    }

    #[test]
    fn step_at_reference_value_is_nearly_fixed() {
        let (_, p) = riccati_step(&scalar(1.1, 1.0), &SymMatrix::from_scalar(1.7744)).unwrap();
        assert!((p.as_matrix()[(0, 0)] - 1.7744).abs() < 1e-3);
    }

    #[test]
    fn stationary_matches_reference_and_closed_form() {
        for (f, h, reference) in [
            (1.1, 1.0, 1.77),
            (2.0, 1.0, 4.23),
            (0.7, 1.5, 1.16),
            (1.0, 16.0, 1.00),
        ] {
            let sol =
                solve_stationary(&scalar(f, h), DEFAULT_STATIONARY_TOL, DEFAULT_MAX_ITER).unwrap();
            let p = sol.p.as_matrix()[(0, 0)];
            assert!((p - reference).abs() <= 0.01, "F={f} H={h}: {p}");
            assert!((p - scalar_oracle(f, h, 1.0, 1.0)).abs() < 1e-9);
            assert!(sol.residual <= DEFAULT_STATIONARY_TOL);
        }
    }

    #[test]
    fn fixed_point_certificate() {
        for f in [0.3, 0.9, 1.5, 3.0] {
            let model = scalar(f, 0.7);
            let sol = solve_stationary(&model, DEFAULT_STATIONARY_TOL, DEFAULT_MAX_ITER).unwrap();
            let (_, again) = riccati_step(&model, &sol.p).unwrap();
            assert!(max_abs_diff(&again, &sol.p) <= 10.0 * DEFAULT_STATIONARY_TOL);
            let p = sol.p.as_matrix()[(0, 0)];
            let h = 0.7;
            let resid = h * h * p * p - (h * h + (f * f - 1.0)) * p - 1.0;
            assert!(resid.abs() <= 10.0 * DEFAULT_STATIONARY_TOL * (1.0 + p * p));
        }
    }

    #[test]
    fn gain_and_innovation_weight() {
        let model = scalar(1.1, 1.0);
        let sol = solve_stationary(&model, DEFAULT_STATIONARY_TOL, DEFAULT_MAX_ITER).unwrap();
        let p = scalar_oracle(1.1, 1.0, 1.0, 1.0);
        assert!((sol.k[(0, 0)] - 1.1 * p / (1.0 + p)).abs() < 1e-9);
        assert!((sol.rtilde.as_matrix()[(0, 0)] - (1.0 + p)).abs() < 1e-9);
        assert!((sol.closed_loop(&model)[(0, 0)] - 1.1 / (1.0 + p)).abs() < 1e-9);
    }

    #[test]
    fn undetectable_unstable_model_does_not_converge() {
        let err = solve_stationary(&scalar(1.5, 0.0), 1e-10, 500).unwrap_err();
        assert!(matches!(
            err,
            Error::NoConvergence {
                iterations: 500,
                ..
            }
        ));
    }

    #[test]
    fn all_stationary_keeps_order_and_index() {
        let set = table1_system('d')
            .unwrap()
            .validate(DEFAULT_PD_TOL)
            .unwrap();
        let sols = stationary_defaults(&set).unwrap();
        assert!((sols[0].p.as_matrix()[(0, 0)] - 4.236).abs() < 1e-3);
        assert!((sols[1].p.as_matrix()[(0, 0)] - 1.0039).abs() < 1e-3);

        let bad = ModelSet::new(vec![
            SystemModel::scalar(0.5, 1.0, 1.0, 1.0),
            SystemModel::scalar(1.5, 0.0, 1.0, 1.0),
        ])
        .validate(DEFAULT_PD_TOL)
        .unwrap();
        assert!(matches!(
            solve_all_stationary(&bad, 1e-10, 200),
            Err(Error::NoConvergence { model: 1, .. })
        ));
    }

    #[test]
    fn singleton_set() {
        let set = ModelSet::new(vec![SystemModel::scalar(0.5, 1.0, 1.0, 1.0)])
            .validate(DEFAULT_PD_TOL)
            .unwrap();
        assert_eq!(stationary_defaults(&set).unwrap().len(), 1);
    }
}
