//! Python bindings. Matrices are passed as lists of rows, vectors as lists.
//! Structured results come back as plain dicts.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use gauss_lasso_core as core;
use gauss_lasso_core::conditions::{self, ReOptions, Regime, ReportInputs};
use gauss_lasso_core::designs::{self, ConfounderDesign};
use gauss_lasso_core::lasso::{self as cl, LassoSettings};
use gauss_lasso_core::{population, CovarianceModel, RegressionInstance};

fn py_err(e: core::Error) -> PyErr {
    match e {
        core::Error::NotConverged { .. } | core::Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn instance(x: &[Vec<f64>], y: Vec<f64>) -> PyResult<RegressionInstance> {
    RegressionInstance::new(matrix(x)?, DVector::from_vec(y)).map_err(py_err)
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Population covariance matrix with the model-selection diagnostics attached.
#[pyclass(name = "Covariance", module = "gauss_lasso", frozen)]
struct PyCovariance {
    inner: CovarianceModel,
}

#[pymethods]
impl PyCovariance {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: CovarianceModel::population(matrix(&rows)?).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn confounder(p: usize, s0: usize, a: f64) -> PyResult<Self> {
        let design = ConfounderDesign::new(p, s0, a).map_err(py_err)?;
        Ok(Self {
            inner: designs::confounder_covariance(&design).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn identity(p: usize) -> Self {
        Self {
            inner: CovarianceModel::identity(p),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows_of(self.inner.matrix())
    }

    fn min_eigenvalue(&self) -> f64 {
        self.inner.min_eigenvalue()
    }

    fn irrepresentability_margin(&self, theta0: Vec<f64>) -> PyResult<f64> {
        conditions::irrepresentability_margin(&self.inner, &DVector::from_vec(theta0)).map_err(py_err)
    }

    fn gic_margin(&self, theta0: Vec<f64>) -> PyResult<f64> {
        conditions::gic_margin(&self.inner, &DVector::from_vec(theta0)).map_err(py_err)
    }

    /// `{"T_star": [...1-based], "v0": [...], "xi0": float | None, "u0": [...]}`
    fn extended_support(&self, py: Python<'_>, theta0: Vec<f64>) -> PyResult<Py<PyAny>> {
        let ext = population::extended_support(&self.inner, &DVector::from_vec(theta0)).map_err(py_err)?;
        to_py(py, &ext)
    }

    fn fit_zero_noise(&self, theta0: Vec<f64>, xi: f64) -> PyResult<Vec<f64>> {
        population::fit_zero_noise(&self.inner, &DVector::from_vec(theta0), xi, &LassoSettings::default())
            .map(|v| v.iter().copied().collect())
            .map_err(py_err)
    }

    #[pyo3(signature = (s, c0=0.0, seed=0))]
    fn restricted_eigenvalue(&self, py: Python<'_>, s: usize, c0: f64, seed: u64) -> PyResult<Py<PyAny>> {
        let opts = ReOptions {
            seed,
            ..ReOptions::default()
        };
        let re = conditions::restricted_eigenvalue(&self.inner, s, c0, &opts).map_err(py_err)?;
        to_py(py, &re)
    }

    /// Every hypothesis and constant of the recovery guarantees, as a dict.
    #[pyo3(signature = (theta0, sigma, n, c1=2.0, c2=0.1, regime="deterministic"))]
    #[allow(clippy::too_many_arguments)]
    fn theorem_report(
        &self,
        py: Python<'_>,
        theta0: Vec<f64>,
        sigma: f64,
        n: usize,
        c1: f64,
        c2: f64,
        regime: &str,
    ) -> PyResult<Py<PyAny>> {
        let regime = match regime {
            "deterministic" => Regime::Deterministic,
            "random" => Regime::Random,
            other => return Err(PyValueError::new_err(format!("unknown regime {other:?}"))),
        };
        let inputs = ReportInputs { sigma, n, c1, c2, regime };
        let report = conditions::theorem_report(&self.inner, &DVector::from_vec(theta0), inputs, &ReOptions::default())
            .map_err(py_err)?;
        to_py(py, &report)
    }

    /// Draws `n` rows from `N(0, Σ)`.
    fn sample(&self, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
        designs::sample_gaussian_design_seeded(&self.inner, n, seed)
            .map(|x| rows_of(&x))
            .map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Covariance(dim={})", self.inner.dim())
    }
}

/// Lasso coefficients at a single `lambda`.
#[pyfunction]
#[pyo3(signature = (x, y, lam, kkt_tol=1e-8, max_sweeps=100_000))]
fn fit_lasso(x: Vec<Vec<f64>>, y: Vec<f64>, lam: f64, kkt_tol: f64, max_sweeps: usize) -> PyResult<Vec<f64>> {
    let inst = instance(&x, y)?;
    let settings = LassoSettings {
        kkt_tol,
        max_sweeps,
        ..LassoSettings::default()
    };
    cl::fit_lasso(&inst, lam, &settings).map(|v| v.iter().copied().collect()).map_err(py_err)
}

/// Largest violation of the Lasso optimality conditions at `theta`.
#[pyfunction]
fn kkt_violation(x: Vec<Vec<f64>>, y: Vec<f64>, lam: f64, theta: Vec<f64>) -> PyResult<f64> {
    let inst = instance(&x, y)?;
    cl::verify_kkt(&inst, lam, &DVector::from_vec(theta), 1e-8)
        .map(|r| r.max_violation)
        .map_err(py_err)
}

/// Lasso coefficients along a strictly decreasing grid, one list per grid point.
#[pyfunction]
fn lasso_path(x: Vec<Vec<f64>>, y: Vec<f64>, lambdas: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
    let inst = instance(&x, y)?;
    let path = cl::lasso_path(&inst, &lambdas, &LassoSettings::default()).map_err(py_err)?;
    Ok(path.coefficients.iter().map(|c| c.iter().copied().collect()).collect())
}

/// Gauss-Lasso selection: dict with `theta_gl`, `lasso_support`, `selected` (0-based) and `flags`.
#[pyfunction]
fn select(py: Python<'_>, x: Vec<Vec<f64>>, y: Vec<f64>, lam: f64, s0: usize) -> PyResult<Py<PyAny>> {
    let inst = instance(&x, y)?;
    let sel = core::gauss_lasso::select(&inst, lam, s0, &LassoSettings::default()).map_err(py_err)?;
    to_py(py, &sel)
}

/// Closed-form confounder-design facts (0-based `t_star`).
#[pyfunction]
fn confounder_oracle(py: Python<'_>, p: usize, s0: usize, a: f64, theta0: Vec<f64>) -> PyResult<Py<PyAny>> {
    let design = ConfounderDesign::new(p, s0, a).map_err(py_err)?;
    let facts = designs::confounder_oracle(&design, &DVector::from_vec(theta0)).map_err(py_err)?;
    to_py(py, &facts)
}

#[pyfunction]
#[pyo3(signature = (sigma, eta, p, n, c1=2.0, regime="deterministic"))]
fn theorem_lambda(sigma: f64, eta: f64, p: usize, n: usize, c1: f64, regime: &str) -> PyResult<f64> {
    let regime = match regime {
        "deterministic" => Regime::Deterministic,
        "random" => Regime::Random,
        other => return Err(PyValueError::new_err(format!("unknown regime {other:?}"))),
    };
    conditions::theorem_lambda(sigma, eta, c1, p, n, regime).map_err(py_err)
}

#[pymodule]
fn gauss_lasso(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyCovariance>()?;
    m.add_function(wrap_pyfunction!(fit_lasso, m)?)?;
    m.add_function(wrap_pyfunction!(kkt_violation, m)?)?;
    m.add_function(wrap_pyfunction!(lasso_path, m)?)?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(confounder_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(theorem_lambda, m)?)?;
    Ok(())
}
