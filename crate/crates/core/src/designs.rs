//! Synthetic Gaussian designs and the single-confounder covariance family.
//!
//! The confounder family is `Σ = I + a (e_p u_Sᵀ + u_S e_pᵀ)` with `S = {1..s0}`:
//! the last covariate is irrelevant but correlated with every relevant one.
//! Everything about it is available in closed form, which makes it the main
//! cross-check for the numerical routines in [`crate::population`] and
//! [`crate::conditions`].

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovarianceModel, RegressionInstance};

/// Seeded generator for substream `stream` of `master_seed`.
///
/// ChaCha20 is counter based, so each `(master_seed, stream)` pair yields an
/// independent, reproducible sequence regardless of scheduling.
pub fn substream(master_seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderDesign {
    pub p: usize,
    pub s0: usize,
    pub a: f64,
}

impl ConfounderDesign {
    pub fn new(p: usize, s0: usize, a: f64) -> Result<Self> {
        let d = Self { p, s0, a };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s0 == 0 || self.s0 >= self.p {
            return Err(Error::Argument(format!(
                "confounder design needs 1 <= s0 < p (got s0 = {}, p = {})",
                self.s0, self.p
            )));
        }
        if !(self.a >= 0.0) || self.a * (self.s0 as f64).sqrt() >= 1.0 {
            return Err(Error::Argument(format!(
                "confounder strength must satisfy 0 <= a < 1/sqrt(s0) (got a = {})",
                self.a
            )));
        }
        Ok(())
    }

    /// Whether the design lies in the regime where the confounder joins `T*`.
    pub fn confounder_active(&self) -> bool {
        self.a * self.s0 as f64 > 1.0
    }
}

pub fn confounder_covariance(design: &ConfounderDesign) -> Result<CovarianceModel> {
    design.validate()?;
    let p = design.p;
    let mut m = DMatrix::identity(p, p);
    for i in 0..design.s0 {
        m[(i, p - 1)] = design.a;
        m[(p - 1, i)] = design.a;
    }
    CovarianceModel::population(m)
}

/// Closed-form facts about the confounder design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleFacts {
    /// 0-based indices.
    pub t_star: Vec<usize>,
    pub v0: Vec<i8>,
    pub xi_star: f64,
    /// Slope of the confounder coefficient of the zero-noise solution in `xi`.
    pub slope_p: f64,
    pub inv_on_s: f64,
    pub inv_on_p: f64,
    pub irr_norm: f64,
    pub gic_norm: f64,
}

/// Closed forms for the confounder design, requiring `theta0 > 0` on `S` and zero elsewhere.
///
/// For `a s0 <= 1` the confounder stays out of `T*`. At `a = 1/s0` exactly the
/// confounder coefficient is identically zero, so that point belongs to this case.
pub fn confounder_oracle(design: &ConfounderDesign, theta0: &DVector<f64>) -> Result<OracleFacts> {
    design.validate()?;
    let (p, s0, a) = (design.p, design.s0, design.a);
    if theta0.len() != p {
        return Err(Error::Dimension(format!("theta0 must have length {p}")));
    }
    if (0..s0).any(|i| !(theta0[i] > 0.0)) {
        return Err(Error::Precondition("theta0 must be strictly positive on S".into()));
    }
    if (s0..p).any(|i| theta0[i] != 0.0) {
        return Err(Error::Precondition("theta0 must vanish off S".into()));
    }
    let theta_min = (0..s0).map(|i| theta0[i]).fold(f64::INFINITY, f64::min);
    let s0f = s0 as f64;
    let irr_norm = a * s0f;

    let mut v0 = vec![0i8; p];
    v0[..s0].fill(1);
    if !design.confounder_active() {
        return Ok(OracleFacts {
            t_star: (0..s0).collect(),
            v0,
            xi_star: theta_min,
            slope_p: 0.0,
            inv_on_s: 1.0,
            inv_on_p: 0.0,
            irr_norm,
            gic_norm: irr_norm,
        });
    }
    let denom = 1.0 - a * a * s0f;
    let mut t_star: Vec<usize> = (0..s0).collect();
    t_star.push(p - 1);
    v0[p - 1] = 1;
    Ok(OracleFacts {
        t_star,
        v0,
        xi_star: (denom / (1.0 - a)).min(1.0) * theta_min,
        slope_p: (a * s0f - 1.0) / denom,
        inv_on_s: (1.0 - a) / denom,
        inv_on_p: (a * s0f - 1.0) / denom,
        irr_norm,
        gic_norm: 0.0,
    })
}

/// The second-case closed forms evaluated at any `a`, for continuity checks.
pub fn confounder_active_formulas(design: &ConfounderDesign) -> (f64, f64, f64) {
    let s0f = design.s0 as f64;
    let a = design.a;
    let denom = 1.0 - a * a * s0f;
    ((a * s0f - 1.0) / denom, (1.0 - a) / denom, (denom / (1.0 - a)).min(1.0))
}

/// `n` rows drawn i.i.d. from `N(0, Σ)`.
pub fn sample_gaussian_design<R: Rng>(cov: &CovarianceModel, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::Dimension("cannot sample an empty design (n = 0)".into()));
    }
    let p = cov.dim();
    let chol = match Cholesky::new(cov.matrix().clone()) {
        Some(c) => c,
        None => Cholesky::new(cov.matrix() + DMatrix::identity(p, p) * 1e-12)
            .ok_or_else(|| Error::Singular("covariance Cholesky failed after jitter".into()))?,
    };
    let l = chol.l();
    // row-major fill keeps the draw order independent of storage layout
    let mut z = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(z * l.transpose())
}

/// Seeded convenience wrapper around [`sample_gaussian_design`].
pub fn sample_gaussian_design_seeded(cov: &CovarianceModel, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_gaussian_design(cov, n, &mut substream(seed, 0))
}

/// Samples `X`, then `W ~ N(0, sigma^2 I)`, and returns `Y = X theta0 + W` with truth attached.
pub fn synth_instance<R: Rng>(
    cov: &CovarianceModel,
    theta0: &DVector<f64>,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<RegressionInstance> {
    if theta0.len() != cov.dim() {
        return Err(Error::Dimension("theta0 length must equal covariance dimension".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Argument("sigma must be nonnegative".into()));
    }
    let x = sample_gaussian_design(cov, n, rng)?;
    let w = DVector::from_fn(n, |_, _| sigma * rng.sample::<f64, _>(StandardNormal));
    RegressionInstance::with_truth(x, theta0.clone(), w, sigma)
}

pub fn synth_instance_seeded(
    cov: &CovarianceModel,
    theta0: &DVector<f64>,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<RegressionInstance> {
    synth_instance(cov, theta0, n, sigma, &mut substream(seed, 0))
}

/// `theta0` equal to `value` on the first `s0` coordinates.
pub fn leading_support_theta(p: usize, s0: usize, value: f64) -> DVector<f64> {
    DVector::from_fn(p, |i, _| if i < s0 { value } else { 0.0 })
}
