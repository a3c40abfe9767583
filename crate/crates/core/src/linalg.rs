//! Thin wrappers around a Cholesky factor of a precision matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Lower Cholesky factor `L` of a symmetric positive-definite precision `P = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct PrecisionFactor {
    chol: Cholesky<f64, Dyn>,
}

impl PrecisionFactor {
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        if precision.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure(
                "precision matrix has non-finite entries".into(),
            ));
        }
        let chol = Cholesky::new(precision).ok_or_else(|| {
            Error::NumericalFailure("precision matrix is not positive definite".into())
        })?;
        if chol.l_dirty().diagonal().iter().any(|&d| !(d > 0.0)) {
            return Err(Error::NumericalFailure(
                "Cholesky factor has a non-positive diagonal".into(),
            ));
        }
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// The lower-triangular factor `L`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `P⁻¹ b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `Lᵀ v`.
    pub fn lt_mul(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().lower_triangle().tr_mul(v)
    }

    /// `log |P⁻¹|`.
    pub fn log_det_inverse(&self) -> f64 {
        -2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Diagonal of `P⁻¹`, from the column norms of `L⁻¹`.
    pub fn inverse_diagonal(&self) -> DVector<f64> {
        let p = self.dim();
        let l = self.chol.l();
        let w = l
            .solve_lower_triangular(&DMatrix::identity(p, p))
            .expect("Cholesky factor has a positive diagonal");
        DVector::from_iterator(p, w.column_iter().map(|c| c.norm_squared()))
    }
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration. The flag reports whether the Rayleigh quotient settled within `tol`.
pub fn power_iteration(m: &DMatrix<f64>, iterations: usize, tol: f64) -> (f64, bool) {
    let n = m.nrows();
    if n == 0 {
        return (0.0, true);
    }
    if n == 1 {
        return (m[(0, 0)].max(0.0), true);
    }
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i as f64 + 1.0).sqrt());
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = m * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return (0.0, true);
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs() {
            return (next, true);
        }
        lambda = next;
    }
    (lambda, false)
}

/// An upper bound on the spectral radius of a symmetric matrix: the smaller of
/// the Gershgorin and Frobenius bounds.
pub fn spectral_upper_bound(m: &DMatrix<f64>) -> f64 {
    let gershgorin = m
        .row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    gershgorin.min(m.norm())
}
