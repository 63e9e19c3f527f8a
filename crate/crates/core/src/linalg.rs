//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Reciprocal condition threshold below which a symmetric block is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-14;

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |i, _| v[idx[i]])
}

pub fn complement(p: usize, set: &[usize]) -> Vec<usize> {
    let mut mask = vec![false; p];
    for &i in set {
        mask[i] = true;
    }
    (0..p).filter(|&i| !mask[i]).collect()
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn inf_norm_slice(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::NAN)
}

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

/// Largest singular value of a general matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |a, x| a.max(*x))
}

/// Cholesky factor of a symmetric positive-definite block, or a singularity error.
pub fn spd_factor(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(m.clone())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..m.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if m.nrows() > 0 && (lo * lo) <= SINGULAR_RCOND * hi * hi {
        return Err(Error::Singular(format!("{what} is numerically singular")));
    }
    Ok(chol)
}

/// Solves `m x = b` for a symmetric positive-definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    Ok(spd_factor(m, what)?.solve(b))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}
