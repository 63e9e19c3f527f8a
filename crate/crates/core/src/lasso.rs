//! ℓ1-regularized least squares: `(1/2n)||Y - X theta||^2 + lambda ||theta||_1`.
//!
//! The solver is cyclic coordinate descent on the residual, stopped when the
//! iterates stall *and* the zero-subgradient condition holds to `kkt_tol`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, soft_threshold};
use crate::model::{zero_threshold, CovarianceModel, RegressionInstance, SignedSupport, ZERO_TOL_FACTOR};

/// Slack allowed on the dual-feasibility inequality of the sign characterization.
pub const DUAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LassoSettings {
    pub max_sweeps: usize,
    pub kkt_tol: f64,
    /// Relative zero tolerance; a coefficient is zero when `|theta_i| <= zero_tol * max(1, ||theta||_inf)`.
    pub zero_tol: f64,
    pub warm_start: Option<DVector<f64>>,
}

impl Default for LassoSettings {
    fn default() -> Self {
        Self {
            max_sweeps: 100_000,
            kkt_tol: 1e-8,
            zero_tol: ZERO_TOL_FACTOR,
            warm_start: None,
        }
    }
}

impl LassoSettings {
    fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 {
            return Err(Error::Argument("max_sweeps must be positive".into()));
        }
        if !(self.kkt_tol > 0.0 && self.zero_tol > 0.0) {
            return Err(Error::Argument("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn threshold_for(&self, theta: &[f64]) -> f64 {
        self.zero_tol * linalg::inf_norm_slice(theta).max(1.0)
    }
}

/// Solver output with diagnostics.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: DVector<f64>,
    pub sweeps: usize,
    pub kkt_residual: f64,
    /// Objective value after each sweep.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub max_violation: f64,
    pub ok: bool,
}

pub fn lambda_max(instance: &RegressionInstance) -> f64 {
    linalg::inf_norm(&instance.xty_over_n())
}

pub fn objective(instance: &RegressionInstance, lambda: f64, theta: &DVector<f64>) -> f64 {
    let r = instance.y() - instance.x() * theta;
    r.norm_squared() / (2.0 * instance.n() as f64) + lambda * theta.lp_norm(1)
}

fn kkt_violation(grad: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    grad.iter()
        .zip(theta.iter())
        .map(|(&g, &t)| {
            if t != 0.0 {
                (g - lambda * t.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Checks the zero-subgradient condition with `g = X^T (Y - X theta) / n`.
pub fn verify_kkt(instance: &RegressionInstance, lambda: f64, theta: &DVector<f64>, tol: f64) -> Result<KktReport> {
    if theta.len() != instance.p() {
        return Err(Error::Dimension(format!(
            "coefficient length {} does not match p = {}",
            theta.len(),
            instance.p()
        )));
    }
    let r = instance.y() - instance.x() * theta;
    let g = instance.x().tr_mul(&r) / instance.n() as f64;
    let max_violation = kkt_violation(&g, theta, lambda);
    Ok(KktReport {
        max_violation,
        ok: max_violation <= tol,
    })
}

pub fn signed_support(theta: &[f64], zero_tol: f64) -> SignedSupport {
    SignedSupport::of(theta, zero_tol)
}

/// Minimizes the Lasso objective; see [`solve_lasso`] for diagnostics.
pub fn fit_lasso(instance: &RegressionInstance, lambda: f64, settings: &LassoSettings) -> Result<DVector<f64>> {
    solve_lasso(instance, lambda, settings).map(|f| f.coef)
}

pub fn solve_lasso(instance: &RegressionInstance, lambda: f64, settings: &LassoSettings) -> Result<LassoFit> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Argument(format!("lambda must be positive and finite, got {lambda}")));
    }
    settings.validate()?;
    let x = instance.x();
    let (n, p) = (instance.n(), instance.p());
    let nf = n as f64;

    let mut theta = match &settings.warm_start {
        Some(w) if w.len() != p => {
            return Err(Error::Dimension(format!("warm start has length {}, expected {p}", w.len())))
        }
        Some(w) => w.clone(),
        None => DVector::zeros(p),
    };
    let col_sq: Vec<f64> = (0..p).map(|j| x.column(j).norm_squared() / nf).collect();
    for j in 0..p {
        if col_sq[j] == 0.0 {
            theta[j] = 0.0;
        }
    }
    let mut resid = instance.y() - x * &theta;
    let mut trace = Vec::new();
    let mut last_kkt = f64::INFINITY;

    for sweep in 1..=settings.max_sweeps {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let xj = x.column(j);
            let rho = xj.dot(&resid) / nf + col_sq[j] * theta[j];
            let new = soft_threshold(rho, lambda) / col_sq[j];
            let delta = new - theta[j];
            if delta != 0.0 {
                resid.axpy(-delta, &xj, 1.0);
                theta[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        trace.push(resid.norm_squared() / (2.0 * nf) + lambda * theta.lp_norm(1));

        if max_change <= 1e-10 * linalg::inf_norm(&theta).max(1.0) {
            // refresh the residual so accumulated rounding does not bias the check
            resid = instance.y() - x * &theta;
            let g = x.tr_mul(&resid) / nf;
            last_kkt = kkt_violation(&g, &theta, lambda);
            if last_kkt <= settings.kkt_tol {
                return Ok(LassoFit {
                    coef: theta,
                    sweeps: sweep,
                    kkt_residual: last_kkt,
                    objective_trace: trace,
                });
            }
        }
    }
    if !last_kkt.is_finite() {
        let g = x.tr_mul(&(instance.y() - x * &theta)) / nf;
        last_kkt = kkt_violation(&g, &theta, lambda);
    }
    Err(Error::NotConverged {
        sweeps: settings.max_sweeps,
        kkt_residual: last_kkt,
        best: theta.iter().copied().collect(),
    })
}

/// Exact signed-support characterization for a candidate `z` with `supp(z) = T ⊇ S`.
///
/// Holds iff
/// `||Σ_{Tc,T} Σ_{T,T}^{-1} z_T + (r_Tc - Σ_{Tc,T} Σ_{T,T}^{-1} r_T) / lambda||_inf <= 1` and
/// `z_T = sign(theta0_T - Σ_{T,T}^{-1} (lambda z_T - r_T))`.
pub fn check_sign_characterization(
    cov: &CovarianceModel,
    r_hat: &DVector<f64>,
    theta0: &DVector<f64>,
    lambda: f64,
    z: &SignedSupport,
) -> Result<bool> {
    let p = cov.dim();
    if r_hat.len() != p || theta0.len() != p || z.dim() != p {
        return Err(Error::Dimension("covariance, r_hat, theta0 and z must share dimension p".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Argument("lambda must be positive".into()));
    }
    let s: Vec<usize> = (0..p).filter(|&i| theta0[i] != 0.0).collect();
    if !z.contains(&s) {
        return Err(Error::Precondition("supp(z) must contain supp(theta0)".into()));
    }
    let m = cov.matrix();
    let t = z.support();
    let tc = linalg::complement(p, t);
    let z_t = z.restricted();
    let r_t = linalg::subvector(r_hat, t);

    let (a, b) = if t.is_empty() {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let chol = linalg::spd_factor(&linalg::submatrix(m, t, t), "Σ_{T,T}")?;
        (chol.solve(&z_t), chol.solve(&r_t))
    };

    let m_tc_t = linalg::submatrix(m, &tc, t);
    let r_tc = linalg::subvector(r_hat, &tc);
    let dual = &m_tc_t * &a + (r_tc - &m_tc_t * &b) / lambda;
    if linalg::inf_norm(&dual) > 1.0 + DUAL_SLACK {
        return Ok(false);
    }

    let theta_t = linalg::subvector(theta0, t) - (&a * lambda - &b);
    Ok(t.iter().enumerate().all(|(k, &i)| linalg::sign(theta_t[k]) == z.signs()[i]))
}

/// A λ-indexed sequence of Lasso solutions.
#[derive(Debug, Clone)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub coefficients: Vec<DVector<f64>>,
    pub supports: Vec<SignedSupport>,
}

impl LassoPath {
    /// Grid indices `k` where the support differs from point `k - 1`.
    pub fn knots(&self) -> Vec<usize> {
        (1..self.supports.len())
            .filter(|&k| self.supports[k] != self.supports[k - 1])
            .collect()
    }

    /// CSV with header `lambda,coef_1,...,coef_p`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.coefficients.first().map_or(0, |c| c.len());
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lambda".to_string()];
        header.extend((1..=p).map(|j| format!("coef_{j}")));
        w.write_record(&header)?;
        for (lambda, coef) in self.lambdas.iter().zip(&self.coefficients) {
            let mut row = vec![lambda.to_string()];
            row.extend(coef.iter().map(|c| c.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Argument("lambda grid is empty".into()));
    }
    if grid.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
        return Err(Error::Argument("lambda grid entries must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Argument("lambda grid must be strictly decreasing".into()));
    }
    Ok(())
}

/// `num` points spaced geometrically from `hi` down to `lo`.
pub fn geometric_grid(hi: f64, lo: f64, num: usize) -> Result<Vec<f64>> {
    if !(hi > 0.0 && lo > 0.0 && hi.is_finite()) || num == 0 || (num > 1 && lo >= hi) {
        return Err(Error::Argument("geometric grid needs 0 < lo < hi and num >= 1".into()));
    }
    if num == 1 {
        return Ok(vec![hi]);
    }
    let ratio = (lo / hi).ln() / (num - 1) as f64;
    Ok((0..num).map(|k| hi * (ratio * k as f64).exp()).collect())
}

/// Warm-started sequential fits along a strictly decreasing grid.
pub fn lasso_path(instance: &RegressionInstance, lambda_grid: &[f64], settings: &LassoSettings) -> Result<LassoPath> {
    validate_grid(lambda_grid)?;
    let mut local = settings.clone();
    let mut coefficients = Vec::with_capacity(lambda_grid.len());
    let mut supports = Vec::with_capacity(lambda_grid.len());
    for (index, &lambda) in lambda_grid.iter().enumerate() {
        let coef = fit_lasso(instance, lambda, &local).map_err(|e| Error::AtGridPoint {
            index,
            source: Box::new(e),
        })?;
        supports.push(signed_support(coef.as_slice(), local.threshold_for(coef.as_slice())));
        local.warm_start = Some(coef.clone());
        coefficients.push(coef);
    }
    Ok(LassoPath {
        lambdas: lambda_grid.to_vec(),
        coefficients,
        supports,
    })
}

/// Support of a fitted vector under the default scale-aware threshold.
pub fn default_support(theta: &DVector<f64>) -> SignedSupport {
    signed_support(theta.as_slice(), zero_threshold(theta.as_slice()))
}

/// Convenience: orthonormalized design `sqrt(n) * I` with a response giving the requested `X^T Y / n`.
pub fn identity_instance(xty: &[f64]) -> RegressionInstance {
    let p = xty.len();
    let scale = (p as f64).sqrt();
    let x = DMatrix::identity(p, p) * scale;
    let y = DVector::from_iterator(p, xty.iter().map(|v| v * scale));
    RegressionInstance::new(x, y).expect("identity design is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{empirical_covariance, noise_correlation};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn random_instance(n: usize, p: usize, s0: usize, sigma: f64, seed: u64) -> RegressionInstance {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let theta = DVector::from_fn(p, |i, _| if i < s0 { if i % 2 == 0 { 1.0 } else { -0.7 } } else { 0.0 });
        let w = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
        RegressionInstance::with_truth(x, theta, w, sigma).unwrap()
    }

    #[test]
    fn identity_design_soft_thresholds() {
        let inst = identity_instance(&[2.0, 0.5]);
        let theta = fit_lasso(&inst, 1.0, &LassoSettings::default()).unwrap();
        assert!((theta[0] - 1.0).abs() < 1e-12);
        assert_eq!(theta[1], 0.0);
        let kkt = verify_kkt(&inst, 1.0, &DVector::from_vec(vec![1.0, 0.0]), 1e-12).unwrap();
        assert!(kkt.max_violation <= 1e-12);
    }

    #[test]
    fn full_shrinkage_above_lambda_max() {
        let inst = random_instance(20, 10, 3, 0.1, 1);
        let lmax = lambda_max(&inst);
        let theta = fit_lasso(&inst, lmax * 1.0001, &LassoSettings::default()).unwrap();
        assert!(theta.iter().all(|&t| t == 0.0));
        assert!(verify_kkt(&inst, lmax, &DVector::zeros(10), 1e-12).unwrap().ok);
    }

    #[test]
    fn nonpositive_lambda_is_rejected() {
        let inst = identity_instance(&[1.0]);
        assert!(matches!(fit_lasso(&inst, 0.0, &LassoSettings::default()), Err(Error::Argument(_))));
        assert!(matches!(fit_lasso(&inst, -1.0, &LassoSettings::default()), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_column_gets_zero_coefficient() {
        let mut x = DMatrix::from_fn(6, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        x.column_mut(1).fill(0.0);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let inst = RegressionInstance::new(x, y).unwrap();
        let theta = fit_lasso(&inst, 0.05, &LassoSettings::default()).unwrap();
        assert_eq!(theta[1], 0.0);
    }

    #[test]
    fn non_convergence_reports_best_iterate() {
        let inst = random_instance(30, 40, 5, 0.5, 9);
        let settings = LassoSettings {
            max_sweeps: 1,
            ..Default::default()
        };
        match fit_lasso(&inst, 0.01, &settings) {
            Err(Error::NotConverged { best, kkt_residual, .. }) => {
                assert_eq!(best.len(), 40);
                assert!(kkt_residual > 0.0);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn objective_is_monotone_per_sweep() {
        for seed in 0..5 {
            let inst = random_instance(30, 50, 5, 0.5, seed);
            let fit = solve_lasso(&inst, 0.05, &LassoSettings::default()).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-13 * w[0].abs().max(1.0));
            }
            assert!(fit.kkt_residual <= 1e-8);
        }
    }

    #[test]
    fn perturbed_solution_fails_kkt() {
        let inst = random_instance(40, 20, 4, 0.3, 4);
        let mut theta = fit_lasso(&inst, 0.05, &LassoSettings::default()).unwrap();
        assert!(verify_kkt(&inst, 0.05, &theta, 1e-8).unwrap().ok);
        let j = theta.iter().position(|&t| t != 0.0).unwrap();
        theta[j] += 1e-3;
        assert!(!verify_kkt(&inst, 0.05, &theta, 1e-8).unwrap().ok);
    }

    #[test]
    fn warm_starts_agree_when_gram_is_definite() {
        let inst = random_instance(60, 15, 4, 0.5, 12);
        let a = fit_lasso(&inst, 0.03, &LassoSettings::default()).unwrap();
        let settings = LassoSettings {
            warm_start: Some(DVector::from_element(15, 3.0)),
            ..Default::default()
        };
        let b = fit_lasso(&inst, 0.03, &settings).unwrap();
        assert!((a - b).amax() <= 1e-6);
    }

    #[test]
    fn sign_characterization_identity_examples() {
        let cov = CovarianceModel::identity(3);
        let r = DVector::zeros(3);
        let theta0 = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let z = SignedSupport::from_signs(vec![1, 1, 0]).unwrap();
        assert!(check_sign_characterization(&cov, &r, &theta0, 0.5, &z).unwrap());
        assert!(!check_sign_characterization(&cov, &r, &theta0, 2.0, &z).unwrap());
        let small = SignedSupport::from_signs(vec![1, 0, 0]).unwrap();
        assert!(matches!(
            check_sign_characterization(&cov, &r, &theta0, 0.5, &small),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn sign_characterization_agrees_with_kkt() {
        let mut checked = 0;
        for seed in 0..30 {
            let inst = random_instance(50, 12, 3, 0.2, 100 + seed);
            let truth = inst.truth().unwrap();
            let lambda = 0.05;
            let theta = fit_lasso(&inst, lambda, &LassoSettings::default()).unwrap();
            let z = default_support(&theta);
            if !z.contains(&truth.support) {
                continue;
            }
            let cov = empirical_covariance(inst.x()).unwrap();
            let r = noise_correlation(inst.x(), &truth.noise).unwrap();
            let kkt_ok = verify_kkt(&inst, lambda, &theta, 1e-8).unwrap().ok;
            let nonsingular = linalg::spd_factor(&linalg::submatrix(cov.matrix(), z.support(), z.support()), "b").is_ok();
            let holds = check_sign_characterization(&cov, &r, &truth.theta0, lambda, &z).unwrap();
            assert_eq!(holds, kkt_ok && nonsingular, "seed {seed}");
            checked += 1;
        }
        assert!(checked >= 20);
    }

    #[test]
    fn path_matches_closed_form_on_identity_design() {
        let xty = [2.0, -1.3, 0.7, 0.2, -0.05];
        let inst = identity_instance(&xty);
        let grid = geometric_grid(2.5, 0.01, 30).unwrap();
        let path = lasso_path(&inst, &grid, &LassoSettings::default()).unwrap();
        for (k, &lambda) in grid.iter().enumerate() {
            for (j, &v) in xty.iter().enumerate() {
                assert!((path.coefficients[k][j] - soft_threshold(v, lambda)).abs() <= 1e-8);
            }
            if k > 0 {
                let prev = path.supports[k - 1].support();
                assert!(prev.iter().all(|i| path.supports[k].support().contains(i)));
            }
        }
        assert!(path.coefficients[0].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn single_point_path_equals_fit() {
        let inst = random_instance(25, 30, 3, 0.2, 77);
        let direct = fit_lasso(&inst, 0.07, &LassoSettings::default()).unwrap();
        let path = lasso_path(&inst, &[0.07], &LassoSettings::default()).unwrap();
        assert_eq!(path.coefficients[0], direct);
    }

    #[test]
    fn grid_validation() {
        assert!(validate_grid(&[1.0, 1.0]).is_err());
        assert!(validate_grid(&[0.5, 1.0]).is_err());
        assert!(validate_grid(&[]).is_err());
        assert!(validate_grid(&[1.0, 0.5]).is_ok());
    }

    #[test]
    fn path_csv_header() {
        let inst = identity_instance(&[1.0, 0.5]);
        let path = lasso_path(&inst, &[0.8, 0.2], &LassoSettings::default()).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("lambda,coef_1,coef_2"));
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row[0], 0.8);
        assert_eq!(row[1], path.coefficients[0][0]);
    }
}
