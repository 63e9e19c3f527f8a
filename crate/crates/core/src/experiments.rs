//! Seeded Monte Carlo harness for support recovery.
//!
//! Replicate `r` of a run with master seed `s` draws everything from ChaCha
//! substream `(s, r)`, so results do not depend on thread scheduling. Trials
//! are collected in replicate order and then reduced sequentially.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditions::{gic_margin, theorem_lambda, Regime};
use crate::designs::{confounder_covariance, leading_support_theta, sample_gaussian_design, substream, synth_instance, ConfounderDesign};
use crate::error::{Error, Result};
use crate::gauss_lasso::{self, sup_error};
use crate::lasso::{self, LassoSettings};
use crate::linalg;
use crate::model::{empirical_covariance, CovarianceModel, SignedSupport};
use crate::population::extended_support;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignKind {
    Confounder,
    Identity,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaRule {
    Explicit,
    TheoremDeterministic,
    TheoremRandom,
}

fn default_theta_value() -> f64 {
    1.0
}

fn default_c1() -> f64 {
    2.0
}

/// Flat experiment description; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub design: DesignKind,
    pub p: usize,
    /// Confounder strength (confounder design only).
    #[serde(default)]
    pub a: f64,
    /// Full covariance rows (explicit design only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    pub s0: usize,
    /// Explicit coefficients; defaults to `theta_value` on the first `s0` coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
    #[serde(default = "default_theta_value")]
    pub theta_value: f64,
    pub n: usize,
    pub sigma: f64,
    pub lambda_rule: LambdaRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default = "default_c1")]
    pub c1: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Desk-scale confounder experiment: `p = 50, n = 600, s0 = 2, sigma = 0.25`, 200 replicates.
    pub fn confounder_default(a: f64, seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            design: DesignKind::Confounder,
            p: 50,
            a,
            covariance: None,
            s0: 2,
            theta0: None,
            theta_value: 1.0,
            n: 600,
            sigma: 0.25,
            lambda_rule: LambdaRule::TheoremRandom,
            lambda: None,
            c1: 2.0,
            replicates: 200,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n == 0 || self.p == 0 || self.s0 == 0 {
            return Err(Error::Config("n, p and s0 must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Config("sigma must be nonnegative".into()));
        }
        match self.lambda_rule {
            LambdaRule::Explicit if !self.lambda.is_some_and(|l| l > 0.0) => {
                return Err(Error::Config("lambda_rule = \"explicit\" requires a positive lambda".into()))
            }
            LambdaRule::TheoremDeterministic | LambdaRule::TheoremRandom if !(self.c1 > 1.0) => {
                return Err(Error::Config("theorem lambda rules require c1 > 1".into()))
            }
            _ => {}
        }
        if self.design == DesignKind::Explicit && self.covariance.is_none() {
            return Err(Error::Config("design = \"explicit\" requires a covariance".into()));
        }
        if let Some(t) = &self.theta0 {
            if t.len() != self.p {
                return Err(Error::Config(format!("theta0 has length {}, expected p = {}", t.len(), self.p)));
            }
        }
        Ok(())
    }

    pub fn covariance_model(&self) -> Result<CovarianceModel> {
        match self.design {
            DesignKind::Confounder => confounder_covariance(&ConfounderDesign::new(self.p, self.s0, self.a)?),
            DesignKind::Identity => Ok(CovarianceModel::identity(self.p)),
            DesignKind::Explicit => {
                let rows = self.covariance.as_ref().ok_or_else(|| Error::Config("missing covariance".into()))?;
                if rows.len() != self.p || rows.iter().any(|r| r.len() != self.p) {
                    return Err(Error::Config(format!("covariance must be {0}x{0}", self.p)));
                }
                CovarianceModel::population(DMatrix::from_fn(self.p, self.p, |i, j| rows[i][j]))
            }
        }
    }

    pub fn theta0_vector(&self) -> DVector<f64> {
        match &self.theta0 {
            Some(t) => DVector::from_column_slice(t),
            None => leading_support_theta(self.p, self.s0, self.theta_value),
        }
    }
}

/// A single parameter override in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Override {
    A(f64),
    N(usize),
    P(usize),
    S0(usize),
    Sigma(f64),
    Lambda(f64),
}

impl Override {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        match *self {
            Override::A(v) => cfg.a = v,
            Override::N(v) => cfg.n = v,
            Override::P(v) => cfg.p = v,
            Override::S0(v) => cfg.s0 = v,
            Override::Sigma(v) => cfg.sigma = v,
            Override::Lambda(v) => {
                cfg.lambda_rule = LambdaRule::Explicit;
                cfg.lambda = Some(v);
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            Override::A(v) => format!("a={v}"),
            Override::N(v) => format!("n={v}"),
            Override::P(v) => format!("p={v}"),
            Override::S0(v) => format!("s0={v}"),
            Override::Sigma(v) => format!("sigma={v}"),
            Override::Lambda(v) => format!("lambda={v}"),
        }
    }

    /// Parses `key=v1,v2,...` into one override per value.
    pub fn parse_list(spec: &str) -> Result<Vec<Override>> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::Argument(format!("sweep must look like key=v1,v2 (got {spec:?})")))?;
        let bad = |v: &str| Error::Argument(format!("bad value {v:?} for sweep key {key}"));
        values
            .split(',')
            .map(str::trim)
            .map(|v| {
                Ok(match key.trim() {
                    "a" => Override::A(v.parse().map_err(|_| bad(v))?),
                    "n" => Override::N(v.parse().map_err(|_| bad(v))?),
                    "p" => Override::P(v.parse().map_err(|_| bad(v))?),
                    "s0" => Override::S0(v.parse().map_err(|_| bad(v))?),
                    "sigma" => Override::Sigma(v.parse().map_err(|_| bad(v))?),
                    "lambda" => Override::Lambda(v.parse().map_err(|_| bad(v))?),
                    other => return Err(Error::Argument(format!("unknown sweep key {other:?}"))),
                })
            })
            .collect()
    }
}

/// Population quantities computed once per configuration.
#[derive(Debug, Clone)]
pub struct PreparedExperiment {
    pub config: ExperimentConfig,
    pub cov: CovarianceModel,
    pub theta0: DVector<f64>,
    pub support: Vec<usize>,
    pub true_signs: SignedSupport,
    pub v0: SignedSupport,
    pub eta: f64,
    /// Fixed regularization, absent for the per-trial deterministic rule.
    pub lambda: Option<f64>,
}

impl PreparedExperiment {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let cov = config.covariance_model()?;
        let theta0 = config.theta0_vector();
        let support: Vec<usize> = (0..theta0.len()).filter(|&i| theta0[i] != 0.0).collect();
        let ext = extended_support(&cov, &theta0)?;
        let eta = gic_margin(&cov, &theta0)?;
        let lambda = match config.lambda_rule {
            LambdaRule::Explicit => config.lambda,
            LambdaRule::TheoremRandom => {
                if !(eta > 0.0) {
                    return Err(Error::Config(format!(
                        "theorem lambda needs a positive GIC margin, got {eta}"
                    )));
                }
                Some(theorem_lambda(config.sigma.max(f64::MIN_POSITIVE), eta, config.c1, config.p, config.n, Regime::Random)?)
            }
            LambdaRule::TheoremDeterministic => None,
        };
        Ok(Self {
            config: config.clone(),
            true_signs: SignedSupport::of(theta0.as_slice(), 0.0),
            cov,
            theta0,
            support,
            v0: ext.support,
            eta,
            lambda,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub replicate: u64,
    pub seed: u64,
    pub lambda: Option<f64>,
    /// `sign(theta_lasso) = v0`.
    pub lasso_sign_ok: bool,
    /// `sign(theta_lasso) = sign(theta0)`.
    pub lasso_true_sign_ok: bool,
    /// `S_hat = S`.
    pub gl_support_ok: bool,
    /// `||theta_GL - theta0||_inf`; absent when the trial failed.
    pub gl_sup_err: Option<f64>,
    pub t_size: usize,
    pub failure: Option<String>,
}

impl TrialOutcome {
    fn failed(replicate: u64, seed: u64, lambda: Option<f64>, reason: String) -> Self {
        Self {
            replicate,
            seed,
            lambda,
            lasso_sign_ok: false,
            lasso_true_sign_ok: false,
            gl_support_ok: false,
            gl_sup_err: None,
            t_size: 0,
            failure: Some(reason),
        }
    }
}

/// One replicate: sample an instance, run the Lasso and the Gauss-Lasso, compare to the truth.
pub fn run_trial(prepared: &PreparedExperiment, replicate: u64) -> TrialOutcome {
    let cfg = &prepared.config;
    let mut rng = substream(cfg.seed, replicate);
    let inst = match synth_instance(&prepared.cov, &prepared.theta0, cfg.n, cfg.sigma, &mut rng) {
        Ok(i) => i,
        Err(e) => return TrialOutcome::failed(replicate, cfg.seed, prepared.lambda, e.to_string()),
    };
    let lambda = match prepared.lambda {
        Some(l) => l,
        None => {
            let per_trial = empirical_covariance(inst.x())
                .and_then(|emp| gic_margin(&emp, &prepared.theta0))
                .and_then(|eta| theorem_lambda(cfg.sigma, eta, cfg.c1, cfg.p, cfg.n, Regime::Deterministic));
            match per_trial {
                Ok(l) => l,
                Err(e) => return TrialOutcome::failed(replicate, cfg.seed, None, e.to_string()),
            }
        }
    };
    let settings = LassoSettings::default();
    let theta = match lasso::fit_lasso(&inst, lambda, &settings) {
        Ok(t) => t,
        Err(e) => return TrialOutcome::failed(replicate, cfg.seed, Some(lambda), e.to_string()),
    };
    let signs = lasso::signed_support(theta.as_slice(), settings.threshold_for(theta.as_slice()));
    let lasso_sign_ok = signs == prepared.v0;
    let lasso_true_sign_ok = signs == prepared.true_signs;
    let t = signs.support().to_vec();
    let t_size = t.len();

    let sel = gauss_lasso::ols_restricted(&inst, &t).map(|theta_gl| {
        let mut order = t.clone();
        order.sort_by(|&a, &b| theta_gl[b].abs().total_cmp(&theta_gl[a].abs()).then(a.cmp(&b)));
        order.truncate(cfg.s0);
        order.sort_unstable();
        (theta_gl, order)
    });
    match sel {
        Ok((theta_gl, selected)) => TrialOutcome {
            replicate,
            seed: cfg.seed,
            lambda: Some(lambda),
            lasso_sign_ok,
            lasso_true_sign_ok,
            gl_support_ok: selected == prepared.support,
            gl_sup_err: Some(sup_error(&theta_gl, &prepared.theta0)),
            t_size,
            failure: None,
        },
        Err(e) => TrialOutcome {
            gl_sup_err: None,
            failure: Some(e.to_string()),
            t_size,
            ..TrialOutcome::failed(replicate, cfg.seed, Some(lambda), String::new())
        }
        .with_lasso(lasso_sign_ok, lasso_true_sign_ok),
    }
}

impl TrialOutcome {
    fn with_lasso(mut self, v0: bool, truth: bool) -> Self {
        self.lasso_sign_ok = v0;
        self.lasso_true_sign_ok = truth;
        self
    }
}

/// All replicates of a prepared experiment, in replicate order.
pub fn run_trials(prepared: &PreparedExperiment) -> Vec<TrialOutcome> {
    (0..prepared.config.replicates as u64)
        .into_par_iter()
        .map(|r| run_trial(prepared, r))
        .collect()
}

/// Normal-approximation 95% interval for a binomial proportion.
pub fn binomial_ci(successes: usize, total: usize) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let p = successes as f64 / total as f64;
    let half = 1.96 * (p * (1.0 - p) / total as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub label: String,
    pub replicates: usize,
    pub failures: usize,
    pub lambda: Option<f64>,
    pub eta: f64,
    pub lasso_v0_freq: f64,
    pub lasso_v0_ci: (f64, f64),
    pub lasso_sign_freq: f64,
    pub lasso_sign_ci: (f64, f64),
    pub gl_freq: f64,
    pub gl_ci: (f64, f64),
    pub mean_gl_sup_err: f64,
    /// Trials where the Lasso recovered `v0` and OLS succeeded but `S_hat != S`.
    pub implication_violations: usize,
}

pub fn summarize(label: String, prepared: &PreparedExperiment, trials: &[TrialOutcome]) -> RecoveryRow {
    let r = trials.len();
    let count = |f: &dyn Fn(&TrialOutcome) -> bool| trials.iter().filter(|t| f(t)).count();
    let v0 = count(&|t| t.lasso_sign_ok);
    let sign = count(&|t| t.lasso_true_sign_ok);
    let gl = count(&|t| t.gl_support_ok);
    let errs: Vec<f64> = trials.iter().filter_map(|t| t.gl_sup_err).collect();
    let mean_err = if errs.is_empty() { f64::NAN } else { errs.iter().sum::<f64>() / errs.len() as f64 };
    let frac = |k: usize| if r == 0 { 0.0 } else { k as f64 / r as f64 };
    RecoveryRow {
        label,
        replicates: r,
        failures: count(&|t| t.failure.is_some()),
        lambda: prepared.lambda,
        eta: prepared.eta,
        lasso_v0_freq: frac(v0),
        lasso_v0_ci: binomial_ci(v0, r),
        lasso_sign_freq: frac(sign),
        lasso_sign_ci: binomial_ci(sign, r),
        gl_freq: frac(gl),
        gl_ci: binomial_ci(gl, r),
        mean_gl_sup_err: mean_err,
        implication_violations: count(&|t| t.lasso_sign_ok && t.gl_sup_err.is_some() && !t.gl_support_ok),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryTable {
    pub rows: Vec<RecoveryRow>,
    /// `(label, error)` for sweep points that could not be set up.
    pub errors: Vec<(String, String)>,
}

/// Recovery frequencies at each sweep point (each point is a list of overrides).
pub fn recovery_curve(config: &ExperimentConfig, sweep: &[Vec<Override>]) -> Result<RecoveryTable> {
    if sweep.is_empty() {
        return Err(Error::Argument("sweep must contain at least one point".into()));
    }
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for point in sweep {
        let mut cfg = config.clone();
        for o in point {
            o.apply(&mut cfg);
        }
        let label = point.iter().map(Override::label).collect::<Vec<_>>().join(";");
        match PreparedExperiment::new(&cfg) {
            Ok(prep) => {
                let trials = run_trials(&prep);
                rows.push(summarize(label, &prep, &trials));
            }
            Err(e) => errors.push((label, e.to_string())),
        }
    }
    Ok(RecoveryTable { rows, errors })
}

impl RecoveryTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "sweep",
            "replicates",
            "failures",
            "lambda",
            "eta",
            "lasso_v0_freq",
            "lasso_v0_lo",
            "lasso_v0_hi",
            "lasso_sign_freq",
            "lasso_sign_lo",
            "lasso_sign_hi",
            "gl_freq",
            "gl_lo",
            "gl_hi",
            "mean_gl_sup_err",
            "implication_violations",
            "error",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.replicates.to_string(),
                r.failures.to_string(),
                r.lambda.map_or(String::new(), |l| l.to_string()),
                r.eta.to_string(),
                r.lasso_v0_freq.to_string(),
                r.lasso_v0_ci.0.to_string(),
                r.lasso_v0_ci.1.to_string(),
                r.lasso_sign_freq.to_string(),
                r.lasso_sign_ci.0.to_string(),
                r.lasso_sign_ci.1.to_string(),
                r.gl_freq.to_string(),
                r.gl_ci.0.to_string(),
                r.gl_ci.1.to_string(),
                r.mean_gl_sup_err.to_string(),
                r.implication_violations.to_string(),
                String::new(),
            ])?;
        }
        for (label, err) in &self.errors {
            let mut row = vec![label.clone()];
            row.extend(std::iter::repeat_n(String::new(), 15));
            row.push(err.clone());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationResult {
    pub replicates: usize,
    /// Threshold `8 sqrt(k/n) sigma_max`.
    pub threshold: f64,
    /// Threshold `8 sqrt(k/n) / sigma_min`.
    pub inverse_threshold: f64,
    pub empirical_freq: f64,
    pub inverse_freq: f64,
    /// `2 exp(-k/2)`, shared by both events.
    pub bound: f64,
}

/// Frequency of large spectral deviations of `X^T X / n` (and of its inverse) from `Σ`.
pub fn concentration_check(cov: &CovarianceModel, k: usize, n: usize, replicates: usize, seed: u64) -> Result<ConcentrationResult> {
    if replicates == 0 {
        return Err(Error::Argument("replicates must be at least 1".into()));
    }
    if cov.dim() != k {
        return Err(Error::Dimension(format!("covariance is {0}x{0}, expected k = {k}", cov.dim())));
    }
    if k == 0 || k > n {
        return Err(Error::Argument(format!("need 1 <= k <= n (k = {k}, n = {n})")));
    }
    let ev = linalg::sym_eigenvalues(cov.matrix());
    let (smin, smax) = (ev[0], ev[k - 1]);
    let scale = 8.0 * (k as f64 / n as f64).sqrt();
    let threshold = scale * smax;
    let inverse_threshold = scale / smin;
    let sigma_inv = cov
        .matrix()
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("covariance".into()))?;

    let hits: Vec<(bool, bool)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r);
            let x = sample_gaussian_design(cov, n, &mut rng).expect("validated covariance");
            let emp = x.tr_mul(&x) / n as f64;
            let dev = linalg::spectral_norm_sym(&(&emp - cov.matrix()));
            let inv_dev = emp
                .try_inverse()
                .map_or(f64::INFINITY, |inv| linalg::spectral_norm_sym(&(inv - &sigma_inv)));
            (dev >= threshold, inv_dev >= inverse_threshold)
        })
        .collect();
    let direct = hits.iter().filter(|h| h.0).count();
    let inverse = hits.iter().filter(|h| h.1).count();
    Ok(ConcentrationResult {
        replicates,
        threshold,
        inverse_threshold,
        empirical_freq: direct as f64 / replicates as f64,
        inverse_freq: inverse as f64 / replicates as f64,
        bound: 2.0 * (-(k as f64) / 2.0).exp(),
    })
}

/// Run manifest written next to every set of results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub schema_version: u32,
    pub wall_time_s: f64,
    pub library_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl RunManifest {
    pub fn new(argv: Vec<String>, seed: Option<u64>, wall_time_s: f64) -> Self {
        Self {
            argv,
            seed,
            schema_version: SCHEMA_VERSION,
            wall_time_s,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            config: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(a: f64, reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            p: 10,
            n: 200,
            replicates: reps,
            ..ExperimentConfig::confounder_default(a, 3)
        }
    }

    #[test]
    fn config_round_trip_and_unknown_keys() {
        let cfg = ExperimentConfig::confounder_default(0.3, 7);
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
        let bad = format!("{text}\nbogus = 1\n");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let zero = text.replace("replicates = 200", "replicates = 0");
        assert!(ExperimentConfig::from_toml(&zero).is_err());
        let v2 = text.replace("schema_version = 1", "schema_version = 2");
        assert!(ExperimentConfig::from_toml(&v2).is_err());
    }

    #[test]
    fn noiseless_identity_trial_recovers() {
        let cfg = ExperimentConfig {
            design: DesignKind::Identity,
            sigma: 0.0,
            lambda_rule: LambdaRule::Explicit,
            lambda: Some(0.05),
            ..small(0.0, 5)
        };
        let prep = PreparedExperiment::new(&cfg).unwrap();
        let t = run_trial(&prep, 0);
        assert!(t.lasso_sign_ok && t.gl_support_ok, "{t:?}");
        assert!(t.gl_sup_err.unwrap() < 1e-10);
    }

    #[test]
    fn huge_lambda_fails_sign_recovery() {
        let cfg = ExperimentConfig {
            lambda_rule: LambdaRule::Explicit,
            lambda: Some(1e6),
            ..small(0.1, 3)
        };
        let prep = PreparedExperiment::new(&cfg).unwrap();
        let t = run_trial(&prep, 1);
        assert!(!t.lasso_sign_ok);
        assert_eq!(t.t_size, 0);
    }

    #[test]
    fn trials_are_deterministic() {
        let prep = PreparedExperiment::new(&small(0.6, 8)).unwrap();
        assert_eq!(run_trials(&prep), run_trials(&prep));
        let t = run_trial(&prep, 3);
        assert_eq!(t, run_trial(&prep, 3));
    }

    #[test]
    fn deterministic_rule_sets_lambda_per_trial() {
        let cfg = ExperimentConfig {
            lambda_rule: LambdaRule::TheoremDeterministic,
            ..small(0.3, 4)
        };
        let prep = PreparedExperiment::new(&cfg).unwrap();
        assert!(prep.lambda.is_none());
        let trials = run_trials(&prep);
        let lambdas: Vec<f64> = trials.iter().filter_map(|t| t.lambda).collect();
        assert_eq!(lambdas.len(), 4);
        assert!(lambdas.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn noiseless_sweep_is_perfect_for_gauss_lasso() {
        let cfg = ExperimentConfig {
            sigma: 0.0,
            lambda_rule: LambdaRule::Explicit,
            lambda: Some(0.05),
            ..small(0.3, 10)
        };
        let table = recovery_curve(&cfg, &[vec![Override::A(0.1)], vec![Override::A(0.6)]]).unwrap();
        for row in &table.rows {
            assert_eq!(row.gl_freq, 1.0, "{row:?}");
        }
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        assert!(recovery_curve(&cfg, &[]).is_err());
    }

    #[test]
    fn override_parsing() {
        let o = Override::parse_list("a=0.3,0.6").unwrap();
        assert_eq!(o, vec![Override::A(0.3), Override::A(0.6)]);
        assert!(Override::parse_list("zz=1").is_err());
        assert!(Override::parse_list("n=abc").is_err());
    }

    #[test]
    fn binomial_interval() {
        let (lo, hi) = binomial_ci(180, 200);
        assert!((lo - (0.9 - 1.96 * (0.09f64 / 200.0).sqrt())).abs() < 1e-15);
        assert!(hi <= 1.0);
        assert_eq!(binomial_ci(200, 200), (1.0, 1.0));
    }

    #[test]
    fn concentration_arguments() {
        let cov = CovarianceModel::identity(3);
        assert!(concentration_check(&cov, 3, 20, 0, 1).is_err());
        assert!(concentration_check(&cov, 4, 20, 5, 1).is_err());
        let r = concentration_check(&cov, 3, 400, 50, 1).unwrap();
        assert_eq!(r.empirical_freq, 0.0);
        assert!((r.threshold - 8.0 * (3.0f64 / 400.0).sqrt()).abs() < 1e-12);
    }
}
