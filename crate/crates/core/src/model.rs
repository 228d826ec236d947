//! Candidate models and their validation.

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, Matrix, SymMatrix, Vector};

/// One candidate model `x+ = F x + w`, `y = H x + v` together with the
/// disturbance weights `Q`, `R` and the initial estimate `x0_hat`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub f: Matrix,
    pub h: Matrix,
    pub q: Matrix,
    pub r: Matrix,
    pub x0_hat: Vector,
}

impl SystemModel {
    /// Model with a zero initial estimate.
    pub fn new(f: Matrix, h: Matrix, q: Matrix, r: Matrix) -> Self {
        let n = f.nrows();
        SystemModel {
            f,
            h,
            q,
            r,
            x0_hat: Vector::zeros(n),
        }
    }

    pub fn scalar(f: f64, h: f64, q: f64, r: f64) -> Self {
        let s = |v| Matrix::from_element(1, 1, v);
        Self::new(s(f), s(h), s(q), s(r))
    }

    pub fn with_x0_hat(mut self, x0_hat: Vector) -> Self {
        self.x0_hat = x0_hat;
        self
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.h.nrows()
    }
}

/// An unvalidated collection of candidate models.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelSet {
    pub models: Vec<SystemModel>,
}

impl ModelSet {
    pub fn new(models: Vec<SystemModel>) -> Self {
        ModelSet { models }
    }

    pub fn validate(&self, tol: f64) -> Result<ValidatedModelSet> {
        validate_model_set(self, tol)
    }
}

/// A model set whose weights are symmetric positive definite and whose
/// dimensions agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModelSet {
    models: Vec<ValidatedModel>,
    n: usize,
    m: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    pub f: Matrix,
    pub h: Matrix,
    pub q: SymMatrix,
    pub r: SymMatrix,
    pub x0_hat: Vector,
}

impl ValidatedModelSet {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn models(&self) -> &[ValidatedModel] {
        &self.models
    }

    pub fn model(&self, i: usize) -> Result<&ValidatedModel> {
        self.models.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.models.len(),
        })
    }

    pub fn x0_hats(&self) -> Vec<Vector> {
        self.models.iter().map(|m| m.x0_hat.clone()).collect()
    }

    /// Back to the raw representation.
    pub fn to_model_set(&self) -> ModelSet {
        ModelSet::new(
            self.models
                .iter()
                .map(|m| SystemModel {
                    f: m.f.clone(),
                    h: m.h.clone(),
                    q: m.q.as_matrix().clone(),
                    r: m.r.as_matrix().clone(),
                    x0_hat: m.x0_hat.clone(),
                })
                .collect(),
        )
    }
}

fn check_finite(m: &Matrix, name: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteEntry(name))
    }
}

fn check_shape(
    model: usize,
    name: &str,
    a: (usize, usize),
    expected: (usize, usize),
) -> Result<()> {
    if a != expected {
        return Err(Error::DimensionMismatch(format!(
            "model {model}: {name} is {}x{}, expected {}x{}",
            a.0, a.1, expected.0, expected.1
        )));
    }
    Ok(())
}

fn symmetric_pd(model: usize, name: &'static str, a: &Matrix, tol: f64) -> Result<SymMatrix> {
    let scale = 1.0 + a.amax();
    if crate::linalg::asymmetry(a) > 1e-9 * scale {
        return Err(Error::NotSymmetric {
            model,
            matrix: name,
        });
    }
    let s = SymMatrix::new(a.clone());
    if !is_positive_definite(&s, tol)? {
        return Err(Error::NotPositiveDefinite {
            model,
            matrix: name,
        });
    }
    Ok(s)
}

/// Checks dimensions, finiteness and that every `Q_i`, `R_i` is symmetric
/// with smallest eigenvalue above `tol`.
pub fn validate_model_set(raw: &ModelSet, tol: f64) -> Result<ValidatedModelSet> {
    let first = raw.models.first().ok_or(Error::EmptySet)?;
    let n = first.f.nrows();
    let m = first.h.nrows();
    let mut models = Vec::with_capacity(raw.models.len());
    for (idx, model) in raw.models.iter().enumerate() {
        check_shape(idx, "F", model.f.shape(), (n, n))?;
        check_shape(idx, "H", model.h.shape(), (m, n))?;
        check_shape(idx, "Q", model.q.shape(), (n, n))?;
        check_shape(idx, "R", model.r.shape(), (m, m))?;
        check_shape(idx, "x0_hat", model.x0_hat.shape(), (n, 1))?;
        check_finite(&model.f, "F")?;
        check_finite(&model.h, "H")?;
        check_finite(&model.q, "Q")?;
        check_finite(&model.r, "R")?;
        if !model.x0_hat.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteEntry("x0_hat"));
        }
        let q = symmetric_pd(idx, "Q", &model.q, tol)?;
        let r = symmetric_pd(idx, "R", &model.r, tol)?;
        models.push(ValidatedModel {
            f: model.f.clone(),
            h: model.h.clone(),
            q,
            r,
            x0_hat: model.x0_hat.clone(),
        });
    }
    Ok(ValidatedModelSet { models, n, m })
}

/// The four scalar two-model systems used throughout the examples, all with
/// `Q = R = 1`, keyed `a` through `d`.
pub fn table1_system(key: char) -> Option<ModelSet> {
    let (f1, f2, h1, h2) = match key {
        'a' => (1.1, 1.1, 1.0, -1.0),
        'b' => (0.9, 0.9, 1.0, -1.0),
        'c' => (0.7, 0.9, 1.5, 1.0),
        'd' => (2.0, 1.0, 1.0, 16.0),
        _ => return None,
    };
    Some(ModelSet::new(vec![
        SystemModel::scalar(f1, h1, 1.0, 1.0),
        SystemModel::scalar(f2, h2, 1.0, 1.0),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DEFAULT_PD_TOL;

    #[test]
    fn table1_sets_are_accepted() {
        for key in ['a', 'b', 'c', 'd'] {
            let set = table1_system(key)
                .unwrap()
                .validate(DEFAULT_PD_TOL)
                .unwrap();
            assert_eq!((set.len(), set.state_dim(), set.output_dim()), (2, 1, 1));
        }
    }

    #[test]
    fn zero_q_is_rejected() {
        let set = ModelSet::new(vec![SystemModel::scalar(1.0, 1.0, 0.0, 1.0)]);
        assert_eq!(
            set.validate(DEFAULT_PD_TOL),
            Err(Error::NotPositiveDefinite {
                model: 0,
                matrix: "Q"
            })
        );
    }

    #[test]
    fn negative_r_names_second_model() {
        let set = ModelSet::new(vec![
            SystemModel::scalar(1.0, 1.0, 1.0, 1.0),
            SystemModel::scalar(1.0, 1.0, 1.0, -1.0),
        ]);
        assert_eq!(
            set.validate(DEFAULT_PD_TOL),
            Err(Error::NotPositiveDefinite {
                model: 1,
                matrix: "R"
            })
        );
    }

    #[test]
    fn mixed_state_dimensions_are_rejected() {
        let two = SystemModel::new(
            Matrix::identity(2, 2),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::identity(2, 2),
            Matrix::identity(1, 1),
        );
        let set = ModelSet::new(vec![SystemModel::scalar(1.0, 1.0, 1.0, 1.0), two]);
        assert!(matches!(
            set.validate(DEFAULT_PD_TOL),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn empty_set() {
        assert_eq!(
            ModelSet::default().validate(DEFAULT_PD_TOL),
            Err(Error::EmptySet)
        );
    }

    #[test]
    fn asymmetric_q_is_rejected() {
        let mut model = SystemModel::new(
            Matrix::identity(2, 2),
            Matrix::from_row_slice(1, 2, &[1.0, 0.0]),
            Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.0, 2.0]),
            Matrix::identity(1, 1),
        );
        assert!(matches!(
            ModelSet::new(vec![model.clone()]).validate(DEFAULT_PD_TOL),
            Err(Error::NotSymmetric {
                model: 0,
                matrix: "Q"
            })
        ));
        model.q[(1, 0)] = 0.5;
        assert!(ModelSet::new(vec![model]).validate(DEFAULT_PD_TOL).is_ok());
    }

    #[test]
    fn validation_is_idempotent() {
        let set = table1_system('c')
            .unwrap()
            .validate(DEFAULT_PD_TOL)
            .unwrap();
        let again = set.to_model_set().validate(DEFAULT_PD_TOL).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn nan_entry_is_reported() {
        let set = ModelSet::new(vec![SystemModel::scalar(f64::NAN, 1.0, 1.0, 1.0)]);
        assert_eq!(
            set.validate(DEFAULT_PD_TOL),
            Err(Error::NonFiniteEntry("F"))
        );
    }
}
