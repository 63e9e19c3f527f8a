//! Two-stage Gauss-Lasso selector: Lasso support `T`, least squares restricted
//! to `T`, then the `s0` largest refitted coefficients.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lasso::{self, LassoSettings};
use crate::linalg;
use crate::model::RegressionInstance;

/// Largest accepted condition number of `X_Tᵀ X_T`.
pub const MAX_NORMAL_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SelectionFlags {
    pub t_larger_than_n: bool,
    pub t_smaller_than_s0: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub lambda: f64,
    #[serde(serialize_with = "ser_vec")]
    pub theta_gl: DVector<f64>,
    /// Lasso support, 0-based.
    pub lasso_support: Vec<usize>,
    /// Selected model, 0-based and sorted.
    pub selected: Vec<usize>,
    pub flags: SelectionFlags,
}

fn ser_vec<S: serde::Serializer>(v: &DVector<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

/// Least squares on the columns `T`, zero elsewhere.
pub fn ols_restricted(instance: &RegressionInstance, t: &[usize]) -> Result<DVector<f64>> {
    let (n, p) = (instance.n(), instance.p());
    if t.iter().any(|&i| i >= p) {
        return Err(Error::Dimension("support index out of range".into()));
    }
    if t.len() > n {
        return Err(Error::Rank(format!("|T| = {} exceeds n = {n}", t.len())));
    }
    let mut out = DVector::zeros(p);
    if t.is_empty() {
        return Ok(out);
    }
    let x = instance.x();
    let xt = DMatrix::from_fn(n, t.len(), |i, k| x[(i, t[k])]);
    let sv = xt.clone().singular_values();
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0_f64), |(l, h), &v| (l.min(v), h.max(v)));
    if !(lo > 0.0) || (hi / lo).powi(2) > MAX_NORMAL_CONDITION {
        return Err(Error::Rank(format!(
            "X_T^T X_T is singular or ill-conditioned (condition number {:e})",
            (hi / lo).powi(2)
        )));
    }
    let qr = xt.qr();
    let qty = qr.q().tr_mul(instance.y());
    let coef = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Rank("triangular solve failed".into()))?;
    for (k, &i) in t.iter().enumerate() {
        out[i] = coef[k];
    }
    Ok(out)
}

/// Indices of the `s0` largest `|theta_i|` over `t`, ties to the smaller index; sorted.
fn top_magnitudes(theta: &DVector<f64>, t: &[usize], s0: usize) -> Vec<usize> {
    let mut order = t.to_vec();
    order.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs()).then(a.cmp(&b)));
    order.truncate(s0);
    order.sort_unstable();
    order
}

fn select_from_support(instance: &RegressionInstance, lambda: f64, t: Vec<usize>, s0: usize) -> Result<SelectionResult> {
    let theta_gl = ols_restricted(instance, &t)?;
    let selected = top_magnitudes(&theta_gl, &t, s0);
    Ok(SelectionResult {
        lambda,
        flags: SelectionFlags {
            t_larger_than_n: false,
            t_smaller_than_s0: t.len() < s0,
        },
        theta_gl,
        lasso_support: t,
        selected,
    })
}

pub fn select(instance: &RegressionInstance, lambda: f64, s0: usize, settings: &LassoSettings) -> Result<SelectionResult> {
    if s0 == 0 {
        return Err(Error::Argument("s0 must be at least 1".into()));
    }
    let theta = lasso::fit_lasso(instance, lambda, settings)?;
    let t = lasso::signed_support(theta.as_slice(), settings.threshold_for(theta.as_slice()))
        .support()
        .to_vec();
    select_from_support(instance, lambda, t, s0)
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussLassoPoint {
    pub lambda: f64,
    pub selection: Option<SelectionResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussLassoPath {
    pub p: usize,
    pub points: Vec<GaussLassoPoint>,
}

/// Gauss-Lasso along a grid; per-point failures are recorded and the path continues.
pub fn gauss_lasso_path(
    instance: &RegressionInstance,
    lambda_grid: &[f64],
    s0: usize,
    settings: &LassoSettings,
) -> Result<GaussLassoPath> {
    if s0 == 0 {
        return Err(Error::Argument("s0 must be at least 1".into()));
    }
    lasso::validate_grid(lambda_grid)?;
    let mut local = settings.clone();
    let mut points = Vec::with_capacity(lambda_grid.len());
    let mut prev: Option<SelectionResult> = None;
    for &lambda in lambda_grid {
        let fit = match lasso::fit_lasso(instance, lambda, &local) {
            Ok(theta) => theta,
            Err(e) => {
                points.push(GaussLassoPoint {
                    lambda,
                    selection: None,
                    error: Some(e.to_string()),
                });
                prev = None;
                continue;
            }
        };
        let t = lasso::signed_support(fit.as_slice(), local.threshold_for(fit.as_slice()))
            .support()
            .to_vec();
        local.warm_start = Some(fit);
        let point = match &prev {
            Some(p) if p.lasso_support == t => {
                let mut same = p.clone();
                same.lambda = lambda;
                GaussLassoPoint {
                    lambda,
                    selection: Some(same),
                    error: None,
                }
            }
            _ => {
                let over = t.len() > instance.n();
                match select_from_support(instance, lambda, t.clone(), s0) {
                    Ok(sel) => GaussLassoPoint {
                        lambda,
                        selection: Some(sel),
                        error: None,
                    },
                    // keep the Lasso support when |T| > n so the CSV can still report its size
                    Err(e) => GaussLassoPoint {
                        lambda,
                        selection: over.then(|| SelectionResult {
                            lambda,
                            theta_gl: DVector::zeros(instance.p()),
                            selected: Vec::new(),
                            flags: SelectionFlags {
                                t_larger_than_n: true,
                                t_smaller_than_s0: t.len() < s0,
                            },
                            lasso_support: t,
                        }),
                        error: Some(e.to_string()),
                    },
                }
            }
        };
        prev = point.selection.clone().filter(|_| point.error.is_none());
        points.push(point);
    }
    Ok(GaussLassoPath {
        p: instance.p(),
        points,
    })
}

impl GaussLassoPath {
    /// CSV `lambda,support_size,coef_1..coef_p,selected_1..selected_p`.
    /// Failed points are written with empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let p = self.p;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["lambda".to_string(), "support_size".to_string()];
        header.extend((1..=p).map(|j| format!("coef_{j}")));
        header.extend((1..=p).map(|j| format!("selected_{j}")));
        w.write_record(&header)?;
        for pt in &self.points {
            let mut row = vec![pt.lambda.to_string()];
            match (&pt.selection, &pt.error) {
                (Some(sel), None) => {
                    row.push(sel.lasso_support.len().to_string());
                    row.extend(sel.theta_gl.iter().map(|c| c.to_string()));
                    let mut mask = vec!["0"; p];
                    for &i in &sel.selected {
                        mask[i] = "1";
                    }
                    row.extend(mask.into_iter().map(String::from));
                }
                _ => {
                    row.push(pt.selection.as_ref().map_or(String::new(), |s| s.lasso_support.len().to_string()));
                    row.extend(std::iter::repeat_n(String::new(), 2 * p));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `||X_Tᵀ (Y - X theta_GL)||_inf`, zero for an exact restricted least-squares fit.
pub fn stage_two_residual_correlation(instance: &RegressionInstance, sel: &SelectionResult) -> f64 {
    let r = instance.y() - instance.x() * &sel.theta_gl;
    sel.lasso_support
        .iter()
        .map(|&j| instance.x().column(j).dot(&r).abs())
        .fold(0.0, f64::max)
}

pub fn sup_error(theta: &DVector<f64>, theta0: &DVector<f64>) -> f64 {
    linalg::inf_norm(&(theta - theta0))
}
