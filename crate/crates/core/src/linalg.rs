//! Small dense linear-algebra helpers: a symmetric matrix newtype and the
//! definiteness predicates used by every certificate in the crate.
//!
//! Definiteness is decided with an absolute eigenvalue floor: `A` is positive
//! definite at tolerance `tol` iff `A - tol I` admits a Cholesky factorization
//! with strictly positive pivots.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default absolute eigenvalue floor for definiteness checks.
pub const DEFAULT_PD_TOL: f64 = 1e-9;

/// Real symmetric matrix, stored as `(A + A^T) / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    /// Symmetrizes `a`. Panics if `a` is not square.
    pub fn new(a: Matrix) -> Self {
        assert!(a.is_square(), "SymMatrix requires a square matrix");
        let t = a.transpose();
        SymMatrix((a + t) * 0.5)
    }

    pub fn try_new(a: Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        Ok(Self::new(a))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn from_scalar(v: f64) -> Self {
        SymMatrix(Matrix::from_element(1, 1, v))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        SymMatrix(&self.0 * s)
    }

    pub fn neg(&self) -> Self {
        SymMatrix(-&self.0)
    }

    /// Largest absolute asymmetry `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        asymmetry(&self.0)
    }

    pub fn eigenvalues(&self) -> Vector {
        self.0.clone().symmetric_eigenvalues()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues().max()
    }

    /// `|v|^2_A = v^T A v`.
    pub fn quad_form(&self, v: &Vector) -> f64 {
        v.dot(&(&self.0 * v))
    }

    /// Inverse of a positive definite matrix, `None` if the factorization fails.
    pub fn spd_inverse(&self) -> Option<SymMatrix> {
        self.0
            .clone()
            .cholesky()
            .map(|c| SymMatrix::new(c.inverse()))
    }

    /// General inverse, for symmetric matrices that may be indefinite.
    pub fn inverse(&self) -> Option<SymMatrix> {
        self.0.clone().try_inverse().map(SymMatrix::new)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl AsRef<Matrix> for SymMatrix {
    fn as_ref(&self) -> &Matrix {
        &self.0
    }
}

pub fn asymmetry(a: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..a.nrows() {
        for c in (r + 1)..a.ncols() {
            worst = worst.max((a[(r, c)] - a[(c, r)]).abs());
        }
    }
    worst
}

/// Whether `a - shift I` factors with strictly positive Cholesky pivots.
fn shifted_cholesky_ok(a: &Matrix, shift: f64) -> bool {
    let n = a.nrows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)] - shift;
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    true
}

/// True iff the smallest eigenvalue of `a` exceeds `tol`.
pub fn is_positive_definite(a: &SymMatrix, tol: f64) -> Result<bool> {
    if !a.is_finite() {
        return Err(Error::NonFiniteEntry("definiteness test"));
    }
    Ok(shifted_cholesky_ok(a.as_matrix(), tol))
}

/// True iff the largest eigenvalue of `a` is below `-tol`.
pub fn is_negative_definite(a: &SymMatrix, tol: f64) -> Result<bool> {
    is_positive_definite(&a.neg(), tol)
}

/// Invertibility test used by the backward recursions: the smallest singular
/// value must exceed `1e-10 * (1 + ||a||_2)`.
pub fn is_numerically_invertible(a: &Matrix) -> bool {
    if a.nrows() == 0 {
        return true;
    }
    let sv = a.clone().singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    smin.is_finite() && smin > 1e-10 * (1.0 + smax)
}

/// Block-diagonal assembly of square or rectangular blocks.
pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Vertical stack of blocks with equal column counts.
pub fn vstack(blocks: &[&Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontal stack of blocks with equal row counts.
pub fn hstack(blocks: &[&Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

/// Stack of vectors into one long vector.
pub fn vstack_vectors(vs: &[&Vector]) -> Vector {
    let len: usize = vs.iter().map(|v| v.len()).sum();
    let mut out = Vector::zeros(len);
    let mut r = 0;
    for v in vs {
        out.rows_mut(r, v.len()).copy_from(*v);
        r += v.len();
    }
    out
}
