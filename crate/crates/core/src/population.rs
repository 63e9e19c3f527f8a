//! Zero-noise and population-level Lasso analysis.
//!
//! With `Y = X theta0` the Lasso objective becomes
//! `(1/2) <theta - theta0, M (theta - theta0)> + xi ||theta||_1` for `M` the empirical
//! (or, at population level, the true) covariance. For all `xi` below a critical
//! `xi0` its signed support is a fixed pattern `(T*, v0)`. We obtain that pattern
//! from the minimizer `u0` of the limit problem
//! `F*(u) = (1/2) <u, M u> + ||u_{S^c}||_1 + <sign(theta0_S), u_S>`
//! and then confirm it with one direct small-`xi` solve.

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lasso::LassoSettings;
use crate::linalg::{self, soft_threshold};
use crate::model::{CovKind, CovarianceModel, SignedSupport};

/// Minimum eigenvalue required of a population covariance.
pub const POPULATION_MIN_EIG: f64 = 1e-10;

const DIAG_EPS: f64 = 1e-12;

/// Output of the weighted-ℓ1 quadratic coordinate descent.
struct QuadSolution {
    theta: DVector<f64>,
    grad: DVector<f64>,
}

/// Minimizes `(1/2) θᵀ M θ - bᵀ θ + Σ_j w_j |θ_j|` by cyclic coordinate descent.
fn weighted_quadratic_cd(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    weights: &[f64],
    kkt_tol: f64,
    max_sweeps: usize,
) -> Result<QuadSolution> {
    let p = m.nrows();
    let mut theta = DVector::zeros(p);
    let mut grad = -b.clone();
    let mut last_kkt = f64::INFINITY;

    for j in 0..p {
        if m[(j, j)] <= DIAG_EPS && b[j].abs() > weights[j] {
            return Err(Error::Degenerate(format!(
                "coordinate {} has zero curvature but a linear term exceeding its penalty; objective is unbounded",
                j + 1
            )));
        }
    }

    for _ in 0..max_sweeps {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            let mjj = m[(j, j)];
            if mjj <= DIAG_EPS {
                continue;
            }
            let rho = mjj * theta[j] - grad[j];
            let new = soft_threshold(rho, weights[j]) / mjj;
            let delta = new - theta[j];
            if delta != 0.0 {
                grad.axpy(delta, &m.column(j), 1.0);
                theta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change <= 1e-12 * linalg::inf_norm(&theta).max(1.0) {
            grad = m * &theta - b;
            last_kkt = weighted_kkt(&grad, &theta, weights);
            if last_kkt <= kkt_tol {
                return Ok(QuadSolution { theta, grad });
            }
        }
    }
    Err(Error::NotConverged {
        sweeps: max_sweeps,
        kkt_residual: last_kkt,
        best: theta.iter().copied().collect(),
    })
}

fn weighted_kkt(grad: &DVector<f64>, theta: &DVector<f64>, weights: &[f64]) -> f64 {
    (0..theta.len())
        .map(|j| {
            if theta[j] != 0.0 {
                (grad[j] + weights[j] * theta[j].signum()).abs()
            } else {
                (grad[j].abs() - weights[j]).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Surfaces non-unique minimizers of a singular `M`: the block on the active
/// coordinates (plus unpenalized ones) must be nonsingular, and so must its
/// extension by any inactive coordinate whose subgradient is tight.
fn check_degeneracy(m: &DMatrix<f64>, sol: &QuadSolution, weights: &[f64]) -> Result<()> {
    let p = m.nrows();
    let base: Vec<usize> = (0..p).filter(|&j| sol.theta[j] != 0.0 || weights[j] == 0.0).collect();
    let singular = |idx: &[usize]| {
        !idx.is_empty() && linalg::spd_factor(&linalg::submatrix(m, idx, idx), "block").is_err()
    };
    if singular(&base) {
        return Err(Error::Degenerate(
            "covariance restricted to the active set is singular; minimizer is not unique".into(),
        ));
    }
    for j in 0..p {
        if base.contains(&j) || weights[j] == 0.0 {
            continue;
        }
        let tight = (sol.grad[j].abs() - weights[j]).abs() <= 1e-8 * weights[j].max(1.0);
        if tight {
            let mut ext = base.clone();
            ext.push(j);
            ext.sort_unstable();
            if m[(j, j)] <= DIAG_EPS || singular(&ext) {
                return Err(Error::Degenerate(format!(
                    "coordinate {} has a tight subgradient along a flat direction; minimizer is not unique",
                    j + 1
                )));
            }
        }
    }
    Ok(())
}

fn require_population_definite(cov: &CovarianceModel) -> Result<()> {
    if cov.kind() == CovKind::Population {
        let lo = cov.min_eigenvalue();
        if lo < POPULATION_MIN_EIG {
            return Err(Error::Precondition(format!(
                "population covariance must be positive definite (min eigenvalue {lo:e})"
            )));
        }
    }
    Ok(())
}

fn support_of(theta0: &DVector<f64>) -> Vec<usize> {
    (0..theta0.len()).filter(|&i| theta0[i] != 0.0).collect()
}

/// Minimizer of `(1/2) <theta - theta0, M (theta - theta0)> + xi ||theta||_1`.
pub fn fit_zero_noise(
    cov: &CovarianceModel,
    theta0: &DVector<f64>,
    xi: f64,
    settings: &LassoSettings,
) -> Result<DVector<f64>> {
    if theta0.len() != cov.dim() {
        return Err(Error::Dimension("theta0 length must equal covariance dimension".into()));
    }
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::Argument(format!("xi must be positive and finite, got {xi}")));
    }
    require_population_definite(cov)?;
    let m = cov.matrix();
    let b = m * theta0;
    let weights = vec![xi; cov.dim()];
    let sol = weighted_quadratic_cd(m, &b, &weights, settings.kkt_tol, settings.max_sweeps)?;
    check_degeneracy(m, &sol, &weights)?;
    Ok(sol.theta)
}

/// Minimizer `u0` of `F*(u) = (1/2) <u, M u> + ||u_{S^c}||_1 + <signs_S, u_S>`.
pub fn minimize_fstar(cov: &CovarianceModel, support: &[usize], signs_s: &[f64]) -> Result<DVector<f64>> {
    let p = cov.dim();
    if support.len() != signs_s.len() {
        return Err(Error::Dimension("one sign per support index is required".into()));
    }
    if support.iter().any(|&i| i >= p) {
        return Err(Error::Dimension("support index out of range".into()));
    }
    if signs_s.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::Argument("signs on S must be +1 or -1".into()));
    }
    require_population_definite(cov)?;
    let m = cov.matrix();
    let mut weights = vec![1.0; p];
    let mut b = DVector::zeros(p);
    for (&i, &s) in support.iter().zip(signs_s) {
        weights[i] = 0.0;
        b[i] = -s;
    }
    let sol = weighted_quadratic_cd(m, &b, &weights, 1e-10, 1_000_000)?;
    check_degeneracy(m, &sol, &weights)?;
    Ok(sol.theta)
}

/// The limiting zero-noise signed support `(T*, v0)`, its threshold `xi0`, and `u0`.
#[derive(Debug, Clone)]
pub struct ExtendedSupport {
    pub support: SignedSupport,
    /// `f64::INFINITY` when `u0` vanishes on `S`.
    pub xi0: f64,
    pub u0: DVector<f64>,
}

impl ExtendedSupport {
    pub fn t_star(&self) -> &[usize] {
        self.support.support()
    }

    pub fn v0(&self) -> &[i8] {
        self.support.signs()
    }

    pub fn t0(&self) -> usize {
        self.support.size()
    }

    pub fn xi0_is_unbounded(&self) -> bool {
        self.xi0.is_infinite()
    }

    /// `M_{T*,T*}^{-1} v0_{T*}`, ordered as `t_star()`.
    pub fn inverse_direction(&self, cov: &CovarianceModel) -> Result<DVector<f64>> {
        inverse_signed(cov, &self.support)
    }
}

impl Serialize for ExtendedSupport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("ExtendedSupport", 4)?;
        let one_based: Vec<usize> = self.t_star().iter().map(|i| i + 1).collect();
        st.serialize_field("T_star", &one_based)?;
        st.serialize_field("v0", self.v0())?;
        st.serialize_field("xi0", &if self.xi0.is_finite() { Some(self.xi0) } else { None })?;
        st.serialize_field("u0", self.u0.as_slice())?;
        st.end()
    }
}

/// `M_{T,T}^{-1} v_T` for the support of `v`.
pub fn inverse_signed(cov: &CovarianceModel, v: &SignedSupport) -> Result<DVector<f64>> {
    let t = v.support();
    if t.is_empty() {
        return Ok(DVector::zeros(0));
    }
    linalg::spd_solve(&linalg::submatrix(cov.matrix(), t, t), &v.restricted(), "M_{T,T}")
}

pub fn extended_support(cov: &CovarianceModel, theta0: &DVector<f64>) -> Result<ExtendedSupport> {
    let p = cov.dim();
    if theta0.len() != p {
        return Err(Error::Dimension("theta0 length must equal covariance dimension".into()));
    }
    let s = support_of(theta0);
    if s.is_empty() {
        return Err(Error::Precondition("theta0 must be nonzero".into()));
    }
    let signs_s: Vec<f64> = s.iter().map(|&i| theta0[i].signum()).collect();
    let u0 = minimize_fstar(cov, &s, &signs_s)?;

    let u_thr = 1e-8 * linalg::inf_norm(&u0).max(1.0);
    let mut signs = vec![0i8; p];
    for j in 0..p {
        if u0[j].abs() > u_thr {
            signs[j] = linalg::sign(u0[j]);
        }
    }
    for &i in &s {
        signs[i] = linalg::sign(theta0[i]);
    }
    let support = SignedSupport::from_signs(signs)?;

    let xi0 = s
        .iter()
        .map(|&i| if u0[i] == 0.0 { f64::INFINITY } else { (theta0[i] / u0[i]).abs() })
        .fold(f64::INFINITY, f64::min);

    // one direct solve well inside (0, xi0)
    let xi_check = if xi0.is_finite() { xi0 / 100.0 } else { linalg::inf_norm(theta0) };
    let scale = linalg::inf_norm(&(cov.matrix() * theta0)).max(1.0);
    let settings = LassoSettings {
        kkt_tol: 1e-12 * scale,
        max_sweeps: 1_000_000,
        ..Default::default()
    };
    let theta = fit_zero_noise(cov, theta0, xi_check, &settings)?;
    let off_thr = 1e-6 * xi_check * linalg::inf_norm(&u0).max(1.0);
    let solved: Vec<i8> = (0..p)
        .map(|j| {
            let thr = if theta0[j] != 0.0 { 0.0 } else { off_thr };
            if theta[j].abs() <= thr {
                0
            } else {
                linalg::sign(theta[j])
            }
        })
        .collect();
    if solved != support.signs() {
        return Err(Error::Inconsistent {
            fstar: support.signs().to_vec(),
            solve: solved,
        });
    }

    Ok(ExtendedSupport { support, xi0, u0 })
}

/// Result of checking a candidate zero-noise signed support.
#[derive(Debug, Clone)]
pub struct ZeroNoiseCheck {
    pub holds: bool,
    /// `theta0_T - xi M_{T,T}^{-1} v_T` on `T`, zeros elsewhere; present when `holds`.
    pub solution: Option<DVector<f64>>,
}

pub fn verify_zero_noise_characterization(
    cov: &CovarianceModel,
    theta0: &DVector<f64>,
    xi: f64,
    candidate: &SignedSupport,
) -> Result<ZeroNoiseCheck> {
    let p = cov.dim();
    if theta0.len() != p || candidate.dim() != p {
        return Err(Error::Dimension("theta0 and candidate must have length p".into()));
    }
    if !candidate.contains(&support_of(theta0)) {
        return Err(Error::Precondition("candidate support must contain supp(theta0)".into()));
    }
    let t = candidate.support();
    let tc = linalg::complement(p, t);
    let inv = inverse_signed(cov, candidate)?;
    let dual = linalg::submatrix(cov.matrix(), &tc, t) * &inv;
    let dual_ok = linalg::inf_norm(&dual) <= 1.0 + crate::lasso::DUAL_SLACK;

    let theta_t = linalg::subvector(theta0, t) - &inv * xi;
    let sign_ok = t
        .iter()
        .enumerate()
        .all(|(k, &i)| linalg::sign(theta_t[k]) == candidate.signs()[i]);

    let holds = dual_ok && sign_ok;
    let solution = holds.then(|| {
        let mut full = DVector::zeros(p);
        for (k, &i) in t.iter().enumerate() {
            full[i] = theta_t[k];
        }
        full
    });
    Ok(ZeroNoiseCheck { holds, solution })
}

/// Upper bound `(1 + 4 ||M||_2 / kappa) s0` on the zero-noise support size.
pub fn support_size_bound(cov: &CovarianceModel, s0: usize, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::Argument(format!("kappa must be positive, got {kappa}")));
    }
    Ok((1.0 + 4.0 * cov.spectral_norm() / kappa) * s0 as f64)
}
