//! Model-selection conditions and the constants of the recovery guarantees.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designs::substream;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::CovarianceModel;
use crate::population::{extended_support, ExtendedSupport};

/// Largest `p` for which restricted eigenvalues are enumerated exactly.
pub const EXACT_RE_MAX_P: usize = 25;

fn support_signs(theta0: &DVector<f64>) -> (Vec<usize>, DVector<f64>) {
    let s: Vec<usize> = (0..theta0.len()).filter(|&i| theta0[i] != 0.0).collect();
    let signs = DVector::from_iterator(s.len(), s.iter().map(|&i| theta0[i].signum()));
    (s, signs)
}

/// `||M_{Tc,T} M_{T,T}^{-1} v_T||_inf`; zero when `Tc` is empty.
fn dual_norm(m: &DMatrix<f64>, t: &[usize], v_t: &DVector<f64>) -> Result<f64> {
    let tc = linalg::complement(m.nrows(), t);
    if tc.is_empty() || t.is_empty() {
        return Ok(0.0);
    }
    let x = linalg::spd_solve(&linalg::submatrix(m, t, t), v_t, "M_{T,T}")?;
    Ok(linalg::inf_norm(&(linalg::submatrix(m, &tc, t) * x)))
}

/// `||M_{Sc,S} M_{S,S}^{-1} sign(theta0_S)||_inf`.
pub fn irrepresentability_norm(cov: &CovarianceModel, theta0: &DVector<f64>) -> Result<f64> {
    if theta0.len() != cov.dim() {
        return Err(Error::Dimension("theta0 length must equal covariance dimension".into()));
    }
    let (s, signs) = support_signs(theta0);
    if s.is_empty() {
        return Err(Error::Precondition("theta0 must have a nonempty support".into()));
    }
    dual_norm(cov.matrix(), &s, &signs)
}

/// `1 - ||M_{Sc,S} M_{S,S}^{-1} sign(theta0_S)||_inf`; positive iff the condition holds.
pub fn irrepresentability_margin(cov: &CovarianceModel, theta0: &DVector<f64>) -> Result<f64> {
    Ok(1.0 - irrepresentability_norm(cov, theta0)?)
}

/// GIC norm evaluated at a precomputed extended support.
pub fn gic_norm_at(cov: &CovarianceModel, ext: &ExtendedSupport) -> Result<f64> {
    dual_norm(cov.matrix(), ext.t_star(), &ext.support.restricted())
}

pub fn gic_norm(cov: &CovarianceModel, theta0: &DVector<f64>) -> Result<f64> {
    gic_norm_at(cov, &extended_support(cov, theta0)?)
}

/// `1 - ||M_{T*c,T*} M_{T*,T*}^{-1} v0_{T*}||_inf`.
pub fn gic_margin(cov: &CovarianceModel, theta0: &DVector<f64>) -> Result<f64> {
    Ok(1.0 - gic_norm(cov, theta0)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Certificate {
    Exact,
    HeuristicUpper,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestrictedEigenvalue {
    pub value: f64,
    pub certificate: Certificate,
}

#[derive(Debug, Clone, Copy)]
pub struct ReOptions {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for ReOptions {
    fn default() -> Self {
        Self {
            restarts: 64,
            iterations: 500,
            seed: 0,
        }
    }
}

fn subsets(p: usize, s: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, p: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for i in start..=p - left {
            cur.push(i);
            rec(i + 1, p, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, p, s, &mut Vec::new(), &mut out);
    out
}

/// Exact `min_{|J| <= s} lambda_min(M_{J,J})` with the minimizing set.
///
/// By eigenvalue interlacing the minimum is attained at `|J| = min(s, p)`.
fn exact_re(m: &DMatrix<f64>, s: usize) -> (f64, Vec<usize>) {
    let p = m.nrows();
    let s = s.min(p);
    (0..=p - s)
        .into_par_iter()
        .map(|first| {
            let mut best = (f64::INFINITY, Vec::new());
            for rest in subsets(p - first - 1, s - 1) {
                let mut j = vec![first];
                j.extend(rest.iter().map(|&r| r + first + 1));
                let v = linalg::min_eigenvalue(&linalg::submatrix(m, &j, &j));
                if v < best.0 {
                    best = (v, j);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, Vec::new()),
            |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        )
}

/// Pulls `u` into `{||u_{Jc}||_1 <= c0 ||u_J||_1}` for `J` its top-`s` coordinates by
/// soft-thresholding the tail. Not the Euclidean projection, but always feasible.
fn cone_pull(u: &mut DVector<f64>, s: usize, c0: f64) {
    let p = u.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| u[b].abs().total_cmp(&u[a].abs()).then(a.cmp(&b)));
    let head: f64 = order[..s].iter().map(|&i| u[i].abs()).sum();
    let tail: Vec<usize> = order[s..].to_vec();
    let tail_l1: f64 = tail.iter().map(|&i| u[i].abs()).sum();
    let budget = c0 * head;
    if tail_l1 <= budget {
        return;
    }
    // find tau with sum max(|u_i| - tau, 0) = budget over the tail
    let mut mags: Vec<f64> = tail.iter().map(|&i| u[i].abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = mags[0];
    for (k, &m) in mags.iter().enumerate() {
        cum += m;
        let t = (cum - budget) / (k + 1) as f64;
        if k + 1 == mags.len() || mags[k + 1] <= t {
            tau = t.max(0.0);
            break;
        }
    }
    for &i in &tail {
        u[i] = linalg::soft_threshold(u[i], tau);
    }
}

fn rayleigh(m: &DMatrix<f64>, u: &DVector<f64>) -> f64 {
    u.dot(&(m * u)) / u.norm_squared()
}

fn heuristic_re(m: &DMatrix<f64>, s: usize, c0: f64, opts: &ReOptions, seeds: &[DVector<f64>]) -> f64 {
    let p = m.nrows();
    let s = s.min(p);
    let step = 0.5 / linalg::spectral_norm_sym(m).max(1e-12);
    let run = |mut u: DVector<f64>| -> f64 {
        cone_pull(&mut u, s, c0);
        if u.norm() == 0.0 {
            return f64::INFINITY;
        }
        u /= u.norm();
        let mut best = rayleigh(m, &u);
        for _ in 0..opts.iterations {
            let r = rayleigh(m, &u);
            let grad = (m * &u - &u * r) * 2.0;
            let mut next = &u - grad * step;
            cone_pull(&mut next, s, c0);
            let nn = next.norm();
            if nn == 0.0 {
                break;
            }
            next /= nn;
            let rn = rayleigh(m, &next);
            best = best.min(rn);
            if (r - rn).abs() <= 1e-15 {
                break;
            }
            u = next;
        }
        best
    };
    let mut best = seeds.iter().map(|u| run(u.clone())).fold(f64::INFINITY, f64::min);
    let random: Vec<f64> = (0..opts.restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(opts.seed, r as u64);
            let u = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
            run(u)
        })
        .collect();
    for v in random {
        best = best.min(v);
    }
    best
}

/// Restricted eigenvalue `kappa(s, c0)`: exact by subset enumeration when `c0 = 0`,
/// otherwise the best feasible Rayleigh quotient from projected-gradient restarts
/// (an upper bound).
pub fn restricted_eigenvalue(cov: &CovarianceModel, s: usize, c0: f64, opts: &ReOptions) -> Result<RestrictedEigenvalue> {
    let p = cov.dim();
    if s == 0 || s > p {
        return Err(Error::Argument(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
    }
    if !(c0 >= 0.0) {
        return Err(Error::Argument("c0 must be nonnegative".into()));
    }
    let m = cov.matrix();
    if c0 == 0.0 {
        if p > EXACT_RE_MAX_P {
            return Err(Error::Capability(format!(
                "exact restricted eigenvalue enumeration is limited to p <= {EXACT_RE_MAX_P}"
            )));
        }
        return Ok(RestrictedEigenvalue {
            value: exact_re(m, s).0,
            certificate: Certificate::Exact,
        });
    }
    let mut seeds = Vec::new();
    // minimizer of the c0 = 0 problem is feasible for every c0 > 0
    if p <= EXACT_RE_MAX_P && binomial(p, s) <= 200_000 {
        let (_, j) = exact_re(m, s);
        let block = nalgebra::SymmetricEigen::new(linalg::submatrix(m, &j, &j));
        let k = block.eigenvalues.imin();
        let mut u = DVector::zeros(p);
        for (a, &i) in j.iter().enumerate() {
            u[i] = block.eigenvectors[(a, k)];
        }
        seeds.push(u);
    }
    let full = nalgebra::SymmetricEigen::new(m.clone());
    seeds.push(full.eigenvectors.column(full.eigenvalues.imin()).into_owned());
    let value = heuristic_re(m, s, c0, opts, &seeds).max(linalg::min_eigenvalue(m));
    Ok(RestrictedEigenvalue {
        value,
        certificate: Certificate::HeuristicUpper,
    })
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// `sigma_min(M_{T,T})`.
pub fn min_singular_value(cov: &CovarianceModel, t: &[usize]) -> Result<f64> {
    if t.is_empty() {
        return Err(Error::Argument("index set must be nonempty".into()));
    }
    if t.iter().any(|&i| i >= cov.dim()) {
        return Err(Error::Dimension("index out of range".into()));
    }
    let block = linalg::submatrix(cov.matrix(), t, t);
    Ok(block.singular_values().iter().fold(f64::INFINITY, |a, &v| a.min(v)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Fixed design, conditions on the empirical covariance.
    Deterministic,
    /// Gaussian random design, conditions on the population covariance.
    Random,
}

/// Prescribed regularization: `(sigma/eta) sqrt(2 c1 log p / n)` (deterministic)
/// or `(4 sigma/eta) sqrt(c1 log p / n)` (random).
pub fn theorem_lambda(sigma: f64, eta: f64, c1: f64, p: usize, n: usize, regime: Regime) -> Result<f64> {
    if !(c1 > 1.0) {
        return Err(Error::Argument(format!("c1 must exceed 1, got {c1}")));
    }
    if !(sigma > 0.0 && eta > 0.0) || p < 2 || n == 0 {
        return Err(Error::Argument("sigma, eta must be positive, p >= 2 and n >= 1".into()));
    }
    let lp = (p as f64).ln();
    let nf = n as f64;
    Ok(match regime {
        Regime::Deterministic => sigma / eta * (2.0 * c1 * lp / nf).sqrt(),
        Regime::Random => 4.0 * sigma / eta * (c1 * lp / nf).sqrt(),
    })
}

/// `M1 = 74 c1 / (eta^2 C_min)`.
pub fn constant_m1(c1: f64, eta: f64, c_min: f64) -> f64 {
    74.0 * c1 / (eta * eta * c_min)
}

/// `M3 = 32^2 c1 / (c2^2 C_min^2)`.
pub fn constant_m3(c1: f64, c2: f64, c_min: f64) -> f64 {
    1024.0 * c1 / (c2 * c2 * c_min * c_min)
}

/// Lower bound on the probability that the Lasso recovers `v0`.
pub fn lasso_success_bound(regime: Regime, p: usize, n: usize, t0: usize, c1: f64) -> f64 {
    let pf = p as f64;
    match regime {
        Regime::Deterministic => 1.0 - 4.0 * pf.powf(1.0 - c1),
        Regime::Random => {
            1.0 - pf * (-(n as f64) / 10.0).exp() - 6.0 * (-(t0 as f64) / 2.0).exp() - 8.0 * pf.powf(1.0 - c1)
        }
    }
}

/// Upper bound on `P(||theta_GL - theta0||_inf >= mu)` for the Gauss-Lasso.
pub fn gl_sup_error_bound(p: usize, n: usize, s0: usize, c1: f64, c_min: f64, sigma: f64, mu: f64) -> f64 {
    let pf = p as f64;
    let nf = n as f64;
    pf * (-nf / 10.0).exp()
        + 6.0 * (-(s0 as f64) / 2.0).exp()
        + 8.0 * pf.powf(1.0 - c1)
        + 2.0 * pf * (-nf * c_min * mu * mu / (2.0 * sigma * sigma)).exp()
}

/// Lower bound on `P(S_hat = S)` for the Gauss-Lasso.
pub fn gl_support_bound(p: usize, n: usize, s0: usize, c1: f64) -> f64 {
    let pf = p as f64;
    1.0 - pf * (-(n as f64) / 10.0).exp() - 6.0 * (-(s0 as f64) / 2.0).exp() - 10.0 * pf.powf(1.0 - c1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionPasses {
    pub diagonal_normalized: bool,
    pub c_min_positive: bool,
    pub gic: bool,
    pub theta_min_on_s: bool,
    pub theta_min_off_s: bool,
    /// `eta <= c2 sqrt(C_min)`; assumed without loss of generality, so reported but not required.
    pub eta_side_condition: bool,
    /// `n >= n_min`; random regime only.
    pub sample_size: Option<bool>,
    pub all: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionReport {
    pub regime: Regime,
    pub p: usize,
    pub n: usize,
    pub s0: usize,
    pub t0: usize,
    /// 1-based.
    pub t_star: Vec<usize>,
    pub v0: Vec<i8>,
    pub xi0: Option<f64>,
    pub sigma: f64,
    /// `None` when `M_{S,S}` is singular.
    pub eta_irr: Option<f64>,
    pub eta_gic: f64,
    pub c_min: f64,
    pub kappa: RestrictedEigenvalue,
    pub lambda: Option<f64>,
    pub c1: f64,
    pub c2: f64,
    pub m1: f64,
    pub m3: f64,
    pub m1_tilde: f64,
    pub m3_tilde: f64,
    pub inflation_factor: f64,
    pub n_min: Option<u64>,
    /// Required `|theta0_i|` for each `i` in `S` (1-based order of `S`).
    pub theta_min_required: Vec<f64>,
    /// `|[M_{T*,T*}^{-1} v0]_i|` for `i` in `T* \ S`.
    pub off_support_inverse: Vec<f64>,
    pub off_support_required: f64,
    /// `sigma sqrt(log p / n) (1 + ||M_{T*,T*}^{-1}||_inf)`; the detection level is a constant times this.
    pub detection_scale: f64,
    pub lasso_probability_bound: f64,
    pub gl_support_probability_bound: Option<f64>,
    pub passes: ConditionPasses,
}

#[derive(Debug, Clone, Copy)]
pub struct ReportInputs {
    pub sigma: f64,
    pub n: usize,
    pub c1: f64,
    pub c2: f64,
    pub regime: Regime,
}

/// Evaluates every hypothesis and constant of the recovery guarantees for `(M, theta0)`.
/// Violated conditions produce `false` flags, not errors.
pub fn theorem_report(cov: &CovarianceModel, theta0: &DVector<f64>, inputs: ReportInputs, re: &ReOptions) -> Result<ConditionReport> {
    let ReportInputs { sigma, n, c1, c2, regime } = inputs;
    if !(c1 > 1.0) {
        return Err(Error::Argument(format!("c1 must exceed 1, got {c1}")));
    }
    if !(c2 > 0.0 && sigma > 0.0) || n == 0 {
        return Err(Error::Argument("c2 and sigma must be positive and n >= 1".into()));
    }
    let p = cov.dim();
    let ext = extended_support(cov, theta0)?;
    let (s, _) = support_signs(theta0);
    let s0 = s.len();
    let t_star = ext.t_star().to_vec();
    let t0 = t_star.len();

    let eta_irr = irrepresentability_margin(cov, theta0).ok();
    let eta_gic = 1.0 - gic_norm_at(cov, &ext)?;
    let c_min = min_singular_value(cov, &t_star)?;
    let inv_dir = ext.inverse_direction(cov)?;
    let kappa = restricted_eigenvalue(cov, s0.max(1), 1.0, re)?;
    let inflation = 1.0 + 4.0 * cov.spectral_norm() / kappa.value;

    let lambda = if eta_gic > 0.0 {
        Some(theorem_lambda(sigma, eta_gic, c1, p, n, regime)?)
    } else {
        None
    };
    let (s_factor, off_factor) = match regime {
        Regime::Deterministic => (1.0, 1.0),
        Regime::Random => (1.5, 2.0),
    };

    let mut theta_min_required = Vec::with_capacity(s0);
    let mut theta_ok = lambda.is_some();
    let mut off_support_inverse = Vec::new();
    for (k, &i) in t_star.iter().enumerate() {
        if theta0[i] != 0.0 {
            let req = lambda.map_or(f64::INFINITY, |l| c2 * l + s_factor * l * inv_dir[k].abs());
            theta_ok &= theta0[i].abs() >= req;
            theta_min_required.push(req);
        } else {
            off_support_inverse.push(inv_dir[k].abs());
        }
    }
    let off_support_required = off_factor * c2;
    let off_ok = off_support_inverse.iter().all(|&v| v >= off_support_required);

    let m1 = constant_m1(c1, eta_gic, c_min);
    let m3 = constant_m3(c1, c2, c_min);
    let log_p = (p as f64).ln();
    let n_min = match regime {
        Regime::Random => Some((m1.max(m3) * t0 as f64 * log_p).ceil() as u64),
        Regime::Deterministic => None,
    };

    let inv_block = linalg::submatrix(cov.matrix(), &t_star, &t_star)
        .try_inverse()
        .ok_or_else(|| Error::Singular("M_{T*,T*}".into()))?;
    let inv_norm = (0..t0).map(|i| inv_block.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let detection_scale = sigma * (log_p / n as f64).sqrt() * (1.0 + inv_norm);

    let diagonal_normalized = cov.diagonal_normalized();
    let c_min_positive = c_min > 0.0;
    let gic = eta_gic > 0.0;
    let sample_size = n_min.map(|m| n as u64 >= m);
    let all = diagonal_normalized && c_min_positive && gic && theta_ok && off_ok && sample_size.unwrap_or(true);

    Ok(ConditionReport {
        regime,
        p,
        n,
        s0,
        t0,
        t_star: t_star.iter().map(|i| i + 1).collect(),
        v0: ext.v0().to_vec(),
        xi0: ext.xi0.is_finite().then_some(ext.xi0),
        sigma,
        eta_irr,
        eta_gic,
        c_min,
        kappa,
        lambda,
        c1,
        c2,
        m1,
        m3,
        m1_tilde: inflation * m1,
        m3_tilde: inflation * m3,
        inflation_factor: inflation,
        n_min,
        theta_min_required,
        off_support_inverse,
        off_support_required,
        detection_scale,
        lasso_probability_bound: lasso_success_bound(regime, p, n, t0, c1),
        gl_support_probability_bound: (regime == Regime::Random).then(|| gl_support_bound(p, n, s0, c1)),
        passes: ConditionPasses {
            diagonal_normalized,
            c_min_positive,
            gic,
            theta_min_on_s: theta_ok,
            theta_min_off_s: off_ok,
            eta_side_condition: eta_gic <= c2 * c_min.sqrt(),
            sample_size,
            all,
        },
    })
}

impl ConditionReport {
    /// Plain-text pass/fail table.
    pub fn render_table(&self) -> String {
        let mark = |b: bool| if b { "PASS" } else { "FAIL" };
        let mut rows = vec![
            ("diagonal entries <= 1", mark(self.passes.diagonal_normalized).to_string()),
            ("C_min > 0", format!("{} ({})", mark(self.passes.c_min_positive), self.c_min)),
            ("generalized irrepresentability", format!("{} (eta = {})", mark(self.passes.gic), self.eta_gic)),
            ("minimum entries on S", mark(self.passes.theta_min_on_s).to_string()),
            ("inverse entries on T* \\ S", mark(self.passes.theta_min_off_s).to_string()),
            ("eta <= c2 sqrt(C_min) (wlog)", mark(self.passes.eta_side_condition).to_string()),
        ];
        if let Some(ok) = self.passes.sample_size {
            rows.push(("n >= n_min", format!("{} (n_min = {})", mark(ok), self.n_min.unwrap_or(0))));
        }
        rows.push(("all required", mark(self.passes.all).to_string()));
        let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (name, val) in rows {
            out.push_str(&format!("{name:<width$}  {val}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{confounder_covariance, leading_support_theta, ConfounderDesign};

    fn confounder(p: usize, s0: usize, a: f64) -> CovarianceModel {
        confounder_covariance(&ConfounderDesign::new(p, s0, a).unwrap()).unwrap()
    }

    fn random_cov(p: usize, seed: u64) -> CovarianceModel {
        let mut rng = substream(seed, 0);
        let b = DMatrix::from_fn(p + 3, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut m = b.tr_mul(&b);
        let d: Vec<f64> = (0..p).map(|i| m[(i, i)].sqrt()).collect();
        for i in 0..p {
            for j in 0..p {
                m[(i, j)] /= d[i] * d[j];
            }
        }
        CovarianceModel::population((&m + m.transpose()) * 0.5).unwrap()
    }

    #[test]
    fn irrepresentability_examples() {
        let t = leading_support_theta(4, 2, 1.0);
        assert_eq!(irrepresentability_margin(&CovarianceModel::identity(4), &t).unwrap(), 1.0);
        assert!((irrepresentability_margin(&confounder(4, 2, 0.3), &t).unwrap() - 0.4).abs() < 1e-12);
        assert!((irrepresentability_margin(&confounder(4, 2, 0.6), &t).unwrap() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn gic_examples() {
        let t = leading_support_theta(4, 2, 1.0);
        assert_eq!(gic_margin(&CovarianceModel::identity(4), &t).unwrap(), 1.0);
        assert!((gic_margin(&confounder(4, 2, 0.6), &t).unwrap() - 1.0).abs() < 1e-10);
        assert!((gic_margin(&confounder(4, 2, 0.3), &t).unwrap() - 0.4).abs() < 1e-10);
    }

    #[test]
    fn restricted_eigenvalue_examples() {
        let id = CovarianceModel::identity(6);
        for s in 1..=3 {
            for c0 in [0.0, 0.5, 1.0] {
                let re = restricted_eigenvalue(&id, s, c0, &ReOptions::default()).unwrap();
                assert!((re.value - 1.0).abs() < 1e-12);
            }
        }
        let m = confounder(4, 2, 0.6);
        let re = restricted_eigenvalue(&m, 2, 0.0, &ReOptions::default()).unwrap();
        assert!((re.value - 0.4).abs() < 1e-12);
        assert_eq!(re.certificate, Certificate::Exact);
        let heur = restricted_eigenvalue(&m, 2, 1.0, &ReOptions::default()).unwrap();
        assert_eq!(heur.certificate, Certificate::HeuristicUpper);
        assert!(heur.value >= 1.0 - 0.6 * 2f64.sqrt() - 1e-10);
        assert!(heur.value <= 0.4 + 1e-12);
    }

    #[test]
    fn exact_mode_is_capped() {
        let big = CovarianceModel::identity(26);
        assert!(matches!(restricted_eigenvalue(&big, 2, 0.0, &ReOptions::default()), Err(Error::Capability(_))));
        assert!(restricted_eigenvalue(&big, 2, 1.0, &ReOptions::default()).is_ok());
    }

    #[test]
    fn restricted_eigenvalue_monotone_and_floored() {
        for seed in 0..6 {
            let m = random_cov(7, seed);
            let floor = m.min_eigenvalue();
            let mut prev = f64::INFINITY;
            for s in 1..=7 {
                let v = restricted_eigenvalue(&m, s, 0.0, &ReOptions::default()).unwrap().value;
                assert!(v <= prev + 1e-12);
                assert!(v >= floor - 1e-10);
                prev = v;
            }
            for c0 in [0.5, 1.0, 3.0] {
                let v = restricted_eigenvalue(&m, 2, c0, &ReOptions::default()).unwrap().value;
                assert!(v >= floor - 1e-10);
                assert!(v <= restricted_eigenvalue(&m, 2, 0.0, &ReOptions::default()).unwrap().value + 1e-12);
            }
        }
    }

    #[test]
    fn cone_pull_is_feasible() {
        let mut u = DVector::from_vec(vec![3.0, -0.1, 2.0, 1.0, -1.5]);
        cone_pull(&mut u, 2, 0.5);
        let mut mags: Vec<f64> = u.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let head: f64 = mags[..2].iter().sum();
        let tail: f64 = mags[2..].iter().sum();
        assert!(tail <= 0.5 * head + 1e-12);
    }

    #[test]
    fn min_singular_value_examples() {
        assert_eq!(min_singular_value(&CovarianceModel::identity(3), &[0, 2]).unwrap(), 1.0);
        let m = confounder(4, 2, 0.6);
        assert!((min_singular_value(&m, &[0, 1, 3]).unwrap() - (1.0 - 0.6 * 2f64.sqrt())).abs() < 1e-12);
        let mut d = DMatrix::identity(3, 3);
        d[(1, 1)] = 0.7;
        let cov = CovarianceModel::population(d).unwrap();
        assert!((min_singular_value(&cov, &[1]).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lambda_formulas() {
        let det = theorem_lambda(1.0, 0.5, 2.0, 100, 200, Regime::Deterministic).unwrap();
        assert!((det - 2.0 * (4.0 * 100f64.ln() / 200.0).sqrt()).abs() < 1e-14);
        assert!((det - 0.60697).abs() < 1e-5);
        let ran = theorem_lambda(1.0, 0.5, 2.0, 100, 200, Regime::Random).unwrap();
        assert!((ran - 8.0 * (2.0 * 100f64.ln() / 200.0).sqrt()).abs() < 1e-14);
        assert!((ran - 1.7168).abs() < 1e-4);
        let half = theorem_lambda(1.0, 1.0, 2.0, 100, 200, Regime::Random).unwrap();
        assert!((half - ran / 2.0).abs() < 1e-14);
        assert!(theorem_lambda(1.0, 0.5, 1.0, 100, 200, Regime::Random).is_err());
    }

    #[test]
    fn theorem_constants() {
        assert!((constant_m1(2.0, 0.5, 0.4) - 1480.0).abs() < 1e-9);
        assert!((constant_m3(2.0, 0.5, 0.4) - 51200.0).abs() < 1e-7);
    }

    #[test]
    fn confounder_report_deterministic() {
        let m = confounder(4, 2, 0.6);
        let t = leading_support_theta(4, 2, 1.0);
        let r = theorem_report(
            &m,
            &t,
            ReportInputs {
                sigma: 0.1,
                n: 10_000,
                c1: 2.0,
                c2: 0.1,
                regime: Regime::Deterministic,
            },
            &ReOptions::default(),
        )
        .unwrap();
        let lambda = r.lambda.unwrap();
        for req in &r.theta_min_required {
            assert!((req - lambda * (0.1 + 10.0 / 7.0)).abs() < 1e-9);
        }
        assert!(r.passes.theta_min_on_s && r.passes.theta_min_off_s && r.passes.gic);
        assert!(r.passes.all);
        assert_eq!(r.t_star, vec![1, 2, 4]);
        assert!(r.n_min.is_none());
        assert!(r.render_table().contains("PASS"));
    }

    #[test]
    fn failed_conditions_still_report() {
        // a = 1/s0: the GIC margin collapses to zero
        let m = confounder(4, 2, 0.5);
        let t = leading_support_theta(4, 2, 1.0);
        let r = theorem_report(
            &m,
            &t,
            ReportInputs {
                sigma: 0.25,
                n: 600,
                c1: 2.0,
                c2: 0.1,
                regime: Regime::Random,
            },
            &ReOptions::default(),
        )
        .unwrap();
        assert!(!r.passes.gic);
        assert!(!r.passes.all);
        assert!(r.lambda.is_none());
    }

    #[test]
    fn gic_reduces_to_irrepresentability_when_t_star_is_s() {
        for seed in 0..10 {
            let m = random_cov(6, 50 + seed);
            let t = DVector::from_vec(vec![1.0, -0.8, 0.0, 0.0, 0.0, 0.0]);
            let ext = extended_support(&m, &t).unwrap();
            let g = 1.0 - gic_norm_at(&m, &ext).unwrap();
            assert!(g >= -1e-8, "gic margin negative: {g}");
            if ext.t_star() == [0, 1] {
                let irr = irrepresentability_margin(&m, &t).unwrap();
                assert!((g - irr).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn confounder_margin_sweep() {
        let eta = 0.2;
        for s0 in [2usize, 3, 5] {
            let p = s0 + 2;
            let t = leading_support_theta(p, s0, 1.0);
            let amax = 1.0 / (s0 as f64).sqrt();
            for k in 0..40 {
                let a = amax * k as f64 / 40.0;
                let m = confounder(p, s0, a);
                let irr = irrepresentability_margin(&m, &t).unwrap();
                assert_eq!(irr > 0.0, a * (s0 as f64) < 1.0, "s0 {s0} a {a}");
                let in_low = a <= (1.0 - eta) / s0 as f64;
                let in_high = a > 1.0 / s0 as f64;
                if in_low || in_high {
                    assert!(gic_margin(&m, &t).unwrap() >= eta - 1e-10, "s0 {s0} a {a}");
                }
            }
        }
    }
}
