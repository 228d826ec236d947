#![allow(dead_code)]

use minimax_bounds::forward::{stationary_defaults, StationarySolution};
use minimax_bounds::linalg::{Matrix, SymMatrix, Vector, DEFAULT_PD_TOL};
use minimax_bounds::model::{table1_system, ModelSet, SystemModel, ValidatedModelSet};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn system(key: char) -> (ValidatedModelSet, Vec<StationarySolution>) {
    let set = table1_system(key)
        .unwrap()
        .validate(DEFAULT_PD_TOL)
        .unwrap();
    let stat = stationary_defaults(&set).unwrap();
    (set, stat)
}

/// A random scalar two-model set with detectable outputs.
pub fn random_scalar_pair(rng: &mut ChaCha8Rng) -> ModelSet {
    let model = |rng: &mut ChaCha8Rng| {
        let f = rng.gen_range(-1.5..1.5);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let h = sign * rng.gen_range(0.2..2.0);
        let x0 = rng.gen_range(-2.0..2.0);
        SystemModel::scalar(f, h, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0))
            .with_x0_hat(Vector::from_element(1, x0))
    };
    ModelSet::new(vec![model(rng), model(rng)])
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    let g = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    SymMatrix::new(&g * g.transpose() + Matrix::identity(n, n) * 0.1)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0))
}

/// Coefficients of a quadratic `phi(y) = y^T A y + b^T y + c` recovered from
/// evaluations at `0`, `+/- e_k` and `e_k + e_l`.
pub struct Quadratic {
    pub a: Matrix,
    pub b: Vector,
    pub c: f64,
}

impl Quadratic {
    pub fn extract(dim: usize, phi: impl Fn(&Vector) -> f64) -> Quadratic {
        let c = phi(&Vector::zeros(dim));
        let unit = |k: usize| {
            let mut e = Vector::zeros(dim);
            e[k] = 1.0;
            e
        };
        let mut a = Matrix::zeros(dim, dim);
        let mut b = Vector::zeros(dim);
        for k in 0..dim {
            let plus = phi(&unit(k));
            let minus = phi(&(-unit(k)));
            a[(k, k)] = 0.5 * (plus + minus) - c;
            b[k] = 0.5 * (plus - minus);
        }
        for k in 0..dim {
            for l in (k + 1)..dim {
                let both = phi(&(unit(k) + unit(l)));
                let v = 0.5 * (both - a[(k, k)] - a[(l, l)] - b[k] - b[l] - c);
                a[(k, l)] = v;
                a[(l, k)] = v;
            }
        }
        Quadratic { a, b, c }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.a.clone().symmetric_eigen().eigenvalues.min()
    }

    /// `min_y phi(y) = c - b^T A^-1 b / 4`, assuming `A` positive definite.
    pub fn minimum(&self) -> f64 {
        let x = self.a.clone().lu().solve(&self.b).expect("A invertible");
        self.c - 0.25 * self.b.dot(&x)
    }
}

/// Bank of stationary filters run on an explicit output sequence; returns the
/// final filter states and accumulated residual costs.
pub fn simulate_bank(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    models: &[usize],
    x0: &[Vector],
    ys: &[Vector],
) -> (Vec<Vector>, Vec<f64>) {
    let mut xs: Vec<Vector> = x0.to_vec();
    let mut cs = vec![0.0; models.len()];
    for y in ys {
        for (slot, &i) in models.iter().enumerate() {
            let md = &set.models()[i];
            let s = &stat[i];
            let r = y - &md.h * &xs[slot];
            cs[slot] += (r.transpose() * s.rtilde_inv.as_matrix() * &r)[(0, 0)];
            xs[slot] = &md.f * &xs[slot] + &s.k * &r;
        }
    }
    (xs, cs)
}

fn split_outputs(y: &Vector, m: usize) -> Vec<Vector> {
    (0..y.len() / m)
        .map(|t| y.rows(t * m, m).into_owned())
        .collect()
}

/// Pairwise objective `sum_t residual costs + [x_i; x_j]^T T_N [x_i; x_j]` as
/// a function of the stacked output sequence.
pub fn pair_quadratic(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    i: usize,
    j: usize,
    terminal: &Matrix,
    horizon: usize,
    x0: &[Vector; 2],
) -> Quadratic {
    let m = set.output_dim();
    Quadratic::extract(m * horizon, |y| {
        let (xs, cs) = simulate_bank(set, stat, &[i, j], x0, &split_outputs(y, m));
        let mut stacked = Vector::zeros(xs[0].len() * 2);
        stacked.rows_mut(0, xs[0].len()).copy_from(&xs[0]);
        stacked.rows_mut(xs[0].len(), xs[1].len()).copy_from(&xs[1]);
        cs[0] + cs[1] + (stacked.transpose() * terminal * &stacked)[(0, 0)]
    })
}

/// Stacked game objective at weights `theta`, divided by `gamma^2`:
/// `sum_i theta_i c_i - min_x sum_i theta_i |x - x_i|^2_{Q_i} / gamma^2`
/// with `Q_i = (I - gamma^-2 P_i)^-1`.
pub fn stacked_quadratic(
    set: &ValidatedModelSet,
    stat: &[StationarySolution],
    theta: &[f64],
    gamma: f64,
    horizon: usize,
    x0: &[Vector],
) -> Quadratic {
    let m = set.output_dim();
    let n = set.state_dim();
    let models: Vec<usize> = (0..set.len()).collect();
    let weights: Vec<Matrix> = stat
        .iter()
        .map(|s| {
            (Matrix::identity(n, n) - s.p.as_matrix() / (gamma * gamma))
                .try_inverse()
                .unwrap()
        })
        .collect();
    Quadratic::extract(m * horizon, |y| {
        let (xs, cs) = simulate_bank(set, stat, &models, x0, &split_outputs(y, m));
        let mut sum = Matrix::zeros(n, n);
        let mut moment = Vector::zeros(n);
        for k in 0..xs.len() {
            sum += &weights[k] * theta[k];
            moment += &weights[k] * &xs[k] * theta[k];
        }
        let x = sum.lu().solve(&moment).unwrap();
        let mut spread = 0.0;
        let mut cost = 0.0;
        for k in 0..xs.len() {
            let d = &x - &xs[k];
            spread += theta[k] * (d.transpose() * &weights[k] * &d)[(0, 0)];
            cost += theta[k] * cs[k];
        }
        cost - spread / (gamma * gamma)
    })
}

/// `min_x sum_k |x - z_k|^2_{W_k}` by a least-squares solve on the stacked
/// Cholesky factors, as `(minimizer, value)`.
pub fn dense_weighted_least_squares(zs: &[Vector], ws: &[Matrix]) -> (Vector, f64) {
    let n = zs[0].len();
    let rows = n * zs.len();
    let mut a = Matrix::zeros(rows, n);
    let mut b = Vector::zeros(rows);
    for (k, (z, w)) in zs.iter().zip(ws).enumerate() {
        let l = w
            .clone()
            .cholesky()
            .expect("weight is positive definite")
            .l();
        let lt = l.transpose();
        a.view_mut((k * n, 0), (n, n)).copy_from(&lt);
        b.rows_mut(k * n, n).copy_from(&(&lt * z));
    }
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-14).unwrap();
    let r = &a * &x - b;
    (x, r.norm_squared())
}
