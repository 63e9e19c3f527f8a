//! Shared data types and elementary matrix statistics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative factor of the scale-aware zero test used for support membership.
pub const ZERO_TOL_FACTOR: f64 = 1e-8;

/// Absolute threshold below which a coefficient of `theta` counts as zero:
/// `1e-8 * max(1, ||theta||_inf)`.
pub fn zero_threshold(theta: &[f64]) -> f64 {
    ZERO_TOL_FACTOR * linalg::inf_norm_slice(theta).max(1.0)
}

/// Ground truth attached to synthetic or diagnostic instances.
#[derive(Debug, Clone)]
pub struct Truth {
    pub theta0: DVector<f64>,
    pub support: Vec<usize>,
    pub noise: DVector<f64>,
    pub sigma: f64,
}

impl Truth {
    pub fn s0(&self) -> usize {
        self.support.len()
    }
}

/// A design matrix, its response and optionally the model that generated them.
#[derive(Debug, Clone)]
pub struct RegressionInstance {
    x: DMatrix<f64>,
    y: DVector<f64>,
    truth: Option<Truth>,
}

impl RegressionInstance {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::Dimension("design matrix must be at least 1x1".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::Dimension(format!(
                "response has length {} but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        Ok(Self { x, y, truth: None })
    }

    /// Builds `Y = X theta0 + W` and records the truth.
    pub fn with_truth(x: DMatrix<f64>, theta0: DVector<f64>, noise: DVector<f64>, sigma: f64) -> Result<Self> {
        if theta0.len() != x.ncols() {
            return Err(Error::Dimension(format!(
                "theta0 has length {} but design has {} columns",
                theta0.len(),
                x.ncols()
            )));
        }
        if noise.len() != x.nrows() {
            return Err(Error::Dimension("noise length must equal row count".into()));
        }
        if !(sigma >= 0.0) {
            return Err(Error::Argument("sigma must be nonnegative".into()));
        }
        let y = &x * &theta0 + &noise;
        let support = (0..theta0.len()).filter(|&i| theta0[i] != 0.0).collect();
        let mut inst = Self::new(x, y)?;
        inst.truth = Some(Truth {
            theta0,
            support,
            noise,
            sigma,
        });
        Ok(inst)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn truth(&self) -> Option<&Truth> {
        self.truth.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// `X^T Y / n`.
    pub fn xty_over_n(&self) -> DVector<f64> {
        self.x.tr_mul(&self.y) / self.n() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovKind {
    Population,
    Empirical,
}

/// A symmetric PSD matrix standing in for either the population covariance or `X^T X / n`.
#[derive(Debug, Clone)]
pub struct CovarianceModel {
    matrix: DMatrix<f64>,
    kind: CovKind,
}

impl CovarianceModel {
    /// Validates symmetry (1e-12) and positive semidefiniteness (eigenvalues >= -1e-10).
    pub fn new(matrix: DMatrix<f64>, kind: CovKind) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.nrows() != matrix.ncols() {
            return Err(Error::Dimension("covariance must be a nonempty square matrix".into()));
        }
        if !linalg::is_symmetric(&matrix, 1e-12) {
            return Err(Error::Argument("covariance is not symmetric".into()));
        }
        let lo = linalg::min_eigenvalue(&matrix);
        if lo < -1e-10 {
            return Err(Error::Argument(format!(
                "covariance is not positive semidefinite (min eigenvalue {lo:e})"
            )));
        }
        Ok(Self { matrix, kind })
    }

    pub fn population(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix, CovKind::Population)
    }

    pub fn identity(p: usize) -> Self {
        Self {
            matrix: DMatrix::identity(p, p),
            kind: CovKind::Population,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> CovKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }

    pub fn spectral_norm(&self) -> f64 {
        linalg::spectral_norm_sym(&self.matrix)
    }

    /// Whether every diagonal entry is at most `1 + 1e-12`.
    pub fn diagonal_normalized(&self) -> bool {
        self.matrix.diagonal().iter().all(|&d| d <= 1.0 + 1e-12)
    }
}

/// A sign pattern in `{-1, 0, +1}^p` together with its support.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SignedSupport {
    signs: Vec<i8>,
    support: Vec<usize>,
}

impl SignedSupport {
    pub fn from_signs(signs: Vec<i8>) -> Result<Self> {
        if let Some(bad) = signs.iter().find(|s| !matches!(s, -1..=1)) {
            return Err(Error::Argument(format!("sign entry {bad} not in {{-1,0,1}}")));
        }
        let support = (0..signs.len()).filter(|&i| signs[i] != 0).collect();
        Ok(Self { signs, support })
    }

    /// Signs of `theta`, with entries of magnitude `<= zero_tol` mapped to 0.
    pub fn of(theta: &[f64], zero_tol: f64) -> Self {
        let signs: Vec<i8> = theta
            .iter()
            .map(|&t| if t.abs() <= zero_tol { 0 } else { linalg::sign(t) })
            .collect();
        let support = (0..signs.len()).filter(|&i| signs[i] != 0).collect();
        Self { signs, support }
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn size(&self) -> usize {
        self.support.len()
    }

    pub fn dim(&self) -> usize {
        self.signs.len()
    }

    pub fn contains(&self, set: &[usize]) -> bool {
        set.iter().all(|&i| self.signs.get(i).is_some_and(|&s| s != 0))
    }

    /// Sign vector restricted to the support, as floats.
    pub fn restricted(&self) -> DVector<f64> {
        DVector::from_iterator(self.support.len(), self.support.iter().map(|&i| self.signs[i] as f64))
    }
}

/// Regularization levels: `lambda` (noisy), `xi` (zero-noise) and the critical `xi0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyState {
    pub lambda: f64,
    pub xi: f64,
    /// `f64::INFINITY` when the zero-noise support never changes.
    pub xi0: f64,
}

impl PenaltyState {
    pub fn new(lambda: f64, xi: f64, xi0: f64) -> Result<Self> {
        if !(lambda >= 0.0 && xi >= 0.0 && xi0 >= 0.0) {
            return Err(Error::Argument("penalties must be nonnegative".into()));
        }
        Ok(Self { lambda, xi, xi0 })
    }
}

/// `X^T X / n`, tagged empirical.
pub fn empirical_covariance(x: &DMatrix<f64>) -> Result<CovarianceModel> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::Dimension("empty design matrix".into()));
    }
    let mut m = x.tr_mul(x) / x.nrows() as f64;
    // gemm output can differ in the last bit across the diagonal
    let p = m.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(CovarianceModel {
        matrix: m,
        kind: CovKind::Empirical,
    })
}

/// `X^T W / n`.
pub fn noise_correlation(x: &DMatrix<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() == 0 {
        return Err(Error::Dimension("empty design matrix".into()));
    }
    if w.len() != x.nrows() {
        return Err(Error::Dimension(format!(
            "noise has length {} but design has {} rows",
            w.len(),
            x.nrows()
        )));
    }
    Ok(x.tr_mul(w) / x.nrows() as f64)
}
