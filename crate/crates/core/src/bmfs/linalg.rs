//! Dense symmetric positive-definite factorisation.
//!
//! nalgebra holds the solver state; the p×p Cholesky and inverse go through
//! faer, whose blocked kernels are several times faster at the dimensions
//! the benchmark uses. faer is built without its thread pool, so results
//! are bitwise reproducible.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};

/// Lower Cholesky factor of an SPD matrix.
pub struct SpdFactor {
    llt: faer::linalg::solvers::Llt<f64>,
    dim: usize,
}

impl SpdFactor {
    /// `None` when the matrix is not numerically positive definite.
    pub fn new(m: &DMatrix<f64>) -> Option<Self> {
        assert_eq!(m.nrows(), m.ncols());
        let dim = m.nrows();
        let view = MatRef::from_column_major_slice(m.as_slice(), dim, dim);
        view.llt(Side::Lower).ok().map(|llt| SpdFactor { llt, dim })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        assert_eq!(rhs.len(), self.dim);
        let b = Mat::<f64>::from_fn(self.dim, 1, |i, _| rhs[i]);
        let x = self.llt.solve(&b);
        DVector::from_fn(self.dim, |i, _| x[(i, 0)])
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.llt.inverse();
        DMatrix::from_fn(self.dim, self.dim, |r, c| inv[(r, c)])
    }
}
