//! Thin helpers over nalgebra for the small dense systems used by the
//! Newton solvers.

use nalgebra::{DMatrix, DVector};

/// Solves `a x = b` for symmetric `a`, Cholesky first and LU as fallback.
/// `None` when `a` is numerically singular.
pub fn solve_symmetric(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
    }
    let lu = a.clone().lu();
    lu.solve(b).filter(|x| x.iter().all(|v| v.is_finite()))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.inverse());
    }
    a.clone().try_inverse()
}

/// `true` when `a` has a Cholesky factorization.
pub fn is_positive_definite(a: &DMatrix<f64>) -> bool {
    a.clone().cholesky().is_some()
}

/// Numerical rank via SVD with a relative tolerance.
pub fn rank(a: &DMatrix<f64>) -> usize {
    // unit-norm columns so the tolerance does not depend on column scale
    let mut scaled = a.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    let svd = scaled.svd(false, false);
    let sv = &svd.singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let tol = max * 1e-10 * (a.nrows().max(a.ncols()) as f64);
    sv.iter().filter(|&&s| s > tol).count()
}
