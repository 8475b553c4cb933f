//! Small dense linear-algebra helpers shared by the Gaussian and filtering code.
//!
//! Everything here works on dynamically sized `nalgebra` matrices; the state
//! dimensions in this crate are small (a dozen at most) so the overhead of
//! heap-backed storage is irrelevant next to the number of particles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative eigenvalue floor below which a covariance is treated as singular.
pub const PD_REL_TOL: f64 = 1e-12;
/// Negative eigenvalues smaller than this (relative to trace/D) are clamped.
pub const PSD_NEG_TOL: f64 = 1e-10;
/// Value assigned to clamped eigenvalues (relative to trace/D).
pub const PSD_FLOOR: f64 = 1e-12;
/// Jitter added to a mixture covariance with a flat direction (relative to trace/D).
pub const JITTER_REL: f64 = 1e-9;

/// `(A + Aᵀ) / 2`, in place.
pub fn symmetrize(a: &mut Matrix) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

fn mean_diag(a: &Matrix) -> f64 {
    let n = a.nrows();
    if n == 0 {
        0.0
    } else {
        a.trace() / n as f64
    }
}

/// Cholesky factorization that also rejects numerically singular matrices.
///
/// A pivot whose square falls below `PD_REL_TOL * trace / n` is treated as a
/// zero eigenvalue.
pub fn cholesky(a: &Matrix) -> Result<Cholesky<f64, Dyn>> {
    let scale = mean_diag(a).abs();
    let chol = Cholesky::new(a.clone()).ok_or(Error::SingularCovariance)?;
    let floor = PD_REL_TOL * scale;
    let l = chol.l_dirty();
    for i in 0..a.nrows() {
        let p = l[(i, i)];
        if !(p * p > floor) || !p.is_finite() {
            return Err(Error::SingularCovariance);
        }
    }
    Ok(chol)
}

/// Log-determinant from a Cholesky factor: twice the sum of log pivots.
pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

/// Inverse of a symmetric positive definite matrix, symmetrized.
pub fn spd_inverse(a: &Matrix) -> Result<Matrix> {
    let mut inv = cholesky(a)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Inverse of a matrix known to be positive definite by construction (for
/// example a sum with a positive definite term), skipping the relative pivot
/// floor of [`cholesky`]. Use when the spread of eigenvalues is legitimately
/// huge.
pub fn pd_inverse_wide(a: &Matrix) -> Result<Matrix> {
    let mut inv = Cholesky::new(a.clone()).ok_or(Error::SingularCovariance)?.inverse();
    symmetrize(&mut inv);
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::SingularCovariance)
    }
}

/// Inverse plus log-determinant of the input.
pub fn spd_inverse_logdet(a: &Matrix) -> Result<(Matrix, f64)> {
    let chol = cholesky(a)?;
    let logdet = chol_logdet(&chol);
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, logdet))
}

/// Symmetrize and lift eigenvalues that are negative beyond round-off.
///
/// Eigenvalues below `-PSD_NEG_TOL * trace / n` are raised to
/// `PSD_FLOOR * trace / n`. Returns true when a clamp was applied.
pub fn psd_clamp(a: &mut Matrix) -> bool {
    symmetrize(a);
    let n = a.nrows();
    if n == 0 {
        return false;
    }
    let scale = mean_diag(a).abs();
    // cheap exit: a successful Cholesky proves positive definiteness
    if Cholesky::new(a.clone()).is_some() {
        return false;
    }
    let eig = SymmetricEigen::new(a.clone());
    let neg = -PSD_NEG_TOL * scale;
    if eig.eigenvalues.iter().all(|&l| l >= neg) {
        return false;
    }
    let floor = PSD_FLOOR * scale;
    let vals = eig.eigenvalues.map(|l| if l < neg { floor } else { l });
    let mut rebuilt = &eig.eigenvectors * Matrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut rebuilt);
    *a = rebuilt;
    true
}

/// Adds `JITTER_REL * trace / n` (or an absolute floor when the trace is zero)
/// to the diagonal whenever the matrix is not positive definite.
/// Returns true when jitter was added.
pub fn jitter_if_singular(a: &mut Matrix) -> bool {
    if a.nrows() == 0 || cholesky(a).is_ok() {
        return false;
    }
    let scale = mean_diag(a).abs();
    let eps = if scale > 0.0 { JITTER_REL * scale } else { JITTER_REL };
    for i in 0..a.nrows() {
        a[(i, i)] += eps;
    }
    true
}

/// `xᵀ A x` for symmetric `A`.
pub fn quad_form(a: &Matrix, x: &Vector) -> f64 {
    x.dot(&(a * x))
}

/// `M A Mᵀ`, symmetrized.
pub fn congruence(m: &Matrix, a: &Matrix) -> Matrix {
    let mut out = m * a * m.transpose();
    symmetrize(&mut out);
    out
}

/// Block-diagonal matrix from two square blocks.
pub fn block_diag(a: &Matrix, b: &Matrix) -> Matrix {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut out = Matrix::zeros(na + nb, na + nb);
    out.view_mut((0, 0), (na, na)).copy_from(a);
    out.view_mut((na, na), (nb, nb)).copy_from(b);
    out
}

/// Stacks two vectors.
pub fn concat(a: &Vector, b: &Vector) -> Vector {
    let mut out = Vector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

/// Largest absolute entry.
pub fn max_abs(a: &Matrix) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
