//! CSV ingestion and the preprocessing used for the communities-and-crime demo:
//! mean imputation, pruning to full column rank, and column standardization.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::Serialize;

use crate::designs::substream;
use crate::error::{Error, Result};
use crate::gauss_lasso::gauss_lasso_path;
use crate::lasso::{self, geometric_grid, LassoSettings};
use crate::model::RegressionInstance;

pub const DEFAULT_MISSING_TOKEN: &str = "?";
/// Relative Gram-Schmidt residual below which a column counts as dependent.
pub const RANK_TOL: f64 = 1e-10;

/// Column-major table of predictors plus one response; `missing[j][i]` marks absent cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub missing: Vec<Vec<bool>>,
    pub response_name: String,
    pub response: Vec<f64>,
    pub response_missing: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub missing_token: String,
    /// Columns to drop while reading (e.g. identifiers).
    pub ignore: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            missing_token: DEFAULT_MISSING_TOKEN.to_string(),
            ignore: Vec::new(),
        }
    }
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.response.len()
    }

    pub fn p(&self) -> usize {
        self.columns.len()
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().flatten().any(|&m| m) || self.response_missing.iter().any(|&m| m)
    }

    pub fn design(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.p(), |i, j| self.columns[j][i])
    }

    pub fn response_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.response)
    }

    pub fn to_instance(&self) -> Result<RegressionInstance> {
        if self.has_missing() {
            return Err(Error::Precondition("dataset still has missing cells".into()));
        }
        RegressionInstance::new(self.design(), self.response_vector())
    }

    /// Keeps the given rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Vec<f64>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_b = |v: &Vec<bool>| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            names: self.names.clone(),
            columns: self.columns.iter().map(pick).collect(),
            missing: self.missing.iter().map(pick_b).collect(),
            response_name: self.response_name.clone(),
            response: pick(&self.response),
            response_missing: pick_b(&self.response_missing),
        }
    }

    /// Writes the dataset back out with a header row; missing cells use `missing_token`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, missing_token: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = self.names.clone();
        header.push(self.response_name.clone());
        w.write_record(&header)?;
        let cell = |v: f64, m: bool| if m { missing_token.to_string() } else { v.to_string() };
        for i in 0..self.n() {
            let mut row: Vec<String> = (0..self.p()).map(|j| cell(self.columns[j][i], self.missing[j][i])).collect();
            row.push(cell(self.response[i], self.response_missing[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn load_csv(path: &Path, response_name: &str, missing_token: &str) -> Result<Dataset> {
    load_csv_with(
        path,
        response_name,
        &LoadOptions {
            missing_token: missing_token.to_string(),
            ..LoadOptions::default()
        },
    )
}

pub fn load_csv_with(path: &Path, response_name: &str, opts: &LoadOptions) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(file, response_name, opts)
}

/// Parses CSV text with a header row. Row numbers in errors count data rows from 1.
pub fn read_csv<R: std::io::Read>(input: R, response_name: &str, opts: &LoadOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let ignore: HashSet<&str> = opts.ignore.iter().map(String::as_str).collect();
    for name in &opts.ignore {
        if !header.contains(name) {
            return Err(Error::Argument(format!("ignored column {name:?} is not in the header")));
        }
    }
    let resp_idx = header
        .iter()
        .position(|h| h == response_name)
        .ok_or_else(|| Error::Argument(format!("response column {response_name:?} not found")))?;
    let keep: Vec<usize> = (0..header.len())
        .filter(|&j| j != resp_idx && !ignore.contains(header[j].as_str()))
        .collect();

    let mut columns = vec![Vec::new(); keep.len()];
    let mut missing = vec![Vec::new(); keep.len()];
    let mut response = Vec::new();
    let mut response_missing = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let parse = |j: usize| -> Result<(f64, bool)> {
            let cell = &record[j];
            if cell == opts.missing_token {
                return Ok((f64::NAN, true));
            }
            cell.parse::<f64>().map(|v| (v, false)).map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                message: format!("cannot parse {cell:?} as a number"),
            })
        };
        for (k, &j) in keep.iter().enumerate() {
            let (v, m) = parse(j)?;
            columns[k].push(v);
            missing[k].push(m);
        }
        let (v, m) = parse(resp_idx)?;
        response.push(v);
        response_missing.push(m);
    }
    Ok(Dataset {
        names: keep.iter().map(|&j| header[j].clone()).collect(),
        columns,
        missing,
        response_name: response_name.to_string(),
        response,
        response_missing,
    })
}

fn impute_column(name: &str, values: &mut [f64], mask: &mut [bool]) -> Result<()> {
    let present: Vec<f64> = values.iter().zip(mask.iter()).filter(|(_, &m)| !m).map(|(&v, _)| v).collect();
    if present.is_empty() {
        if values.is_empty() {
            return Ok(());
        }
        return Err(Error::Precondition(format!("column {name:?} has no observed values")));
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    for (v, m) in values.iter_mut().zip(mask.iter_mut()) {
        if *m {
            *v = mean;
            *m = false;
        }
    }
    Ok(())
}

/// Replaces each missing cell by the mean of the observed cells of its column.
pub fn impute_missing(ds: &Dataset) -> Result<Dataset> {
    let mut out = ds.clone();
    for j in 0..out.p() {
        impute_column(&out.names[j], &mut out.columns[j], &mut out.missing[j])?;
    }
    impute_column(&out.response_name, &mut out.response, &mut out.response_missing)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "columns")]
pub enum PruneMode {
    /// Drop exactly these columns.
    Explicit(Vec<String>),
    /// Scan left to right, dropping columns that lie in the span of those kept so far.
    RankGreedy,
}

impl PruneMode {
    pub fn name(&self) -> &'static str {
        match self {
            PruneMode::Explicit(_) => "explicit-list",
            PruneMode::RankGreedy => "rank-greedy",
        }
    }

    /// Reads one column name per line (blank lines and `#` comments skipped).
    pub fn from_list_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(PruneMode::Explicit(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        ))
    }
}

fn drop_columns(ds: &Dataset, drop: &HashSet<usize>) -> Dataset {
    let keep = |j: &usize| !drop.contains(j);
    let idx: Vec<usize> = (0..ds.p()).filter(keep).collect();
    Dataset {
        names: idx.iter().map(|&j| ds.names[j].clone()).collect(),
        columns: idx.iter().map(|&j| ds.columns[j].clone()).collect(),
        missing: idx.iter().map(|&j| ds.missing[j].clone()).collect(),
        ..ds.clone()
    }
}

/// Indices of columns that are (numerically) in the span of earlier kept columns.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..x.ncols() {
        let col = x.column(j).into_owned();
        let norm = col.norm();
        let mut r = col;
        // two passes of modified Gram-Schmidt keep the residual accurate
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r.axpy(-c, q, 1.0);
            }
        }
        let rn = r.norm();
        if norm == 0.0 || rn <= RANK_TOL * norm {
            dropped.push(j);
        } else {
            basis.push(r / rn);
        }
    }
    dropped
}

pub fn prune_columns(ds: &Dataset, mode: &PruneMode) -> Result<Dataset> {
    match mode {
        PruneMode::Explicit(names) => {
            let mut drop = HashSet::new();
            for name in names {
                let j = ds
                    .names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::Argument(format!("column {name:?} not found")))?;
                drop.insert(j);
            }
            Ok(drop_columns(ds, &drop))
        }
        PruneMode::RankGreedy => {
            if ds.has_missing() {
                return Err(Error::Precondition("impute missing cells before rank pruning".into()));
            }
            let drop: HashSet<usize> = dependent_columns(&ds.design()).into_iter().collect();
            Ok(drop_columns(ds, &drop))
        }
    }
}

/// Predictors: mean 0 and Euclidean norm `sqrt(n)`. Response: centered only.
pub fn standardize(ds: &Dataset) -> Result<Dataset> {
    if ds.has_missing() {
        return Err(Error::Precondition("impute missing cells before standardizing".into()));
    }
    let n = ds.n();
    if n < 2 {
        return Err(Error::Precondition("standardizing needs at least two rows".into()));
    }
    let target = (n as f64).sqrt();
    let mut out = ds.clone();
    for (name, col) in out.names.iter().zip(out.columns.iter_mut()) {
        let mean = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= mean);
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(mean.abs());
        if norm == 0.0 || norm <= 1e-12 * scale * target {
            return Err(Error::Precondition(format!("column {name:?} is constant")));
        }
        col.iter_mut().for_each(|v| *v *= target / norm);
        // a second centering pass removes the rounding left by the first
        let resid = col.iter().sum::<f64>() / n as f64;
        col.iter_mut().for_each(|v| *v -= resid);
    }
    let mean = out.response.iter().sum::<f64>() / n as f64;
    out.response.iter_mut().for_each(|v| *v -= mean);
    Ok(out)
}

/// Impute, prune, standardize, in that order.
pub fn preprocess(ds: &Dataset, mode: &PruneMode) -> Result<Dataset> {
    let imputed = impute_missing(ds)?;
    let pruned = prune_columns(&imputed, mode)?;
    standardize(&pruned)
}

/// Least-squares coefficients on all columns via Householder QR.
pub fn full_ols(ds: &Dataset) -> Result<DVector<f64>> {
    let x = ds.design();
    let y = ds.response_vector();
    let (n, p) = x.shape();
    if n < p {
        return Err(Error::Rank(format!("n = {n} is smaller than p = {p}")));
    }
    if ds.has_missing() {
        return Err(Error::Precondition("dataset still has missing cells".into()));
    }
    let dependent = dependent_columns(&x);
    if !dependent.is_empty() {
        let names: Vec<&str> = dependent.iter().map(|&j| ds.names[j].as_str()).collect();
        return Err(Error::Rank(format!("columns {names:?} are linearly dependent")));
    }
    let qr = x.qr();
    let qty = qr.q().tr_mul(&y);
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Rank("triangular factor is singular".into()))
}

/// Reference operating points reported for the full communities data.
#[derive(Debug, Clone, Serialize)]
pub struct PublishedReference {
    pub n_total: usize,
    pub p: usize,
    pub s0: usize,
    /// `(lambda, true positives, false positives)` for the Lasso on one subsample.
    pub lasso_points: Vec<(f64, usize, usize)>,
}

impl Default for PublishedReference {
    fn default() -> Self {
        Self {
            n_total: 1994,
            p: 106,
            s0: 13,
            lasso_points: vec![(0.08, 4, 4), (0.01, 10, 8)],
        }
    }
}

#[derive(Debug, Clone)]
pub struct DemoOptions {
    pub n_sub: usize,
    pub significance_threshold: f64,
    pub lasso_zero_threshold: f64,
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for DemoOptions {
    fn default() -> Self {
        Self {
            n_sub: 85,
            significance_threshold: 0.04,
            lasso_zero_threshold: 0.005,
            lambda_grid: geometric_grid(1.0, 0.001, 50).expect("valid grid"),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoReport {
    pub s0: usize,
    pub mode: String,
    pub seed: u64,
    pub n_total: usize,
    pub p: usize,
    pub n_sub: usize,
    pub rows: Vec<usize>,
    pub active: Vec<String>,
    pub theta0: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub lasso_tp: Vec<usize>,
    pub lasso_fp: Vec<usize>,
    /// `None` where the Gauss-Lasso could not be computed (e.g. `|T| > n`).
    pub gl_tp: Vec<Option<usize>>,
    pub gl_fp: Vec<Option<usize>>,
    pub reference: PublishedReference,
}

#[derive(Debug, Clone)]
pub struct DemoOutput {
    pub report: DemoReport,
    pub lasso_path: lasso::LassoPath,
    pub gl_path: crate::gauss_lasso::GaussLassoPath,
}

fn tp_fp(selected: impl IntoIterator<Item = usize>, active: &HashSet<usize>) -> (usize, usize) {
    let (mut tp, mut fp) = (0, 0);
    for j in selected {
        if active.contains(&j) {
            tp += 1;
        } else {
            fp += 1;
        }
    }
    (tp, fp)
}

/// Subsample, re-standardize, and compare Lasso and Gauss-Lasso paths against the
/// full-data least-squares truth. `ds` must already be preprocessed.
pub fn crime_demo(ds: &Dataset, mode: &PruneMode, opts: &DemoOptions) -> Result<DemoOutput> {
    let n_total = ds.n();
    if opts.n_sub == 0 || opts.n_sub > n_total {
        return Err(Error::Argument(format!("n_sub must be in 1..={n_total}")));
    }
    let theta0 = full_ols(ds)?;
    let active: HashSet<usize> = (0..theta0.len())
        .filter(|&j| theta0[j].abs() > opts.significance_threshold)
        .collect();
    let s0 = active.len();
    if s0 == 0 {
        return Err(Error::Precondition("no coefficient exceeds the significance threshold".into()));
    }
    let mut rng = substream(opts.seed, 0);
    let mut rows = sample(&mut rng, n_total, opts.n_sub).into_vec();
    rows.sort_unstable();
    let sub = standardize(&ds.select_rows(&rows))?;
    let inst = sub.to_instance()?;
    let settings = LassoSettings::default();

    let (lasso_path, gl_path) = rayon::join(
        || lasso::lasso_path(&inst, &opts.lambda_grid, &settings),
        || gauss_lasso_path(&inst, &opts.lambda_grid, s0, &settings),
    );
    let (lasso_path, gl_path) = (lasso_path?, gl_path?);

    let mut lasso_tp = Vec::new();
    let mut lasso_fp = Vec::new();
    for coef in &lasso_path.coefficients {
        let (tp, fp) = tp_fp((0..coef.len()).filter(|&j| coef[j].abs() >= opts.lasso_zero_threshold), &active);
        lasso_tp.push(tp);
        lasso_fp.push(fp);
    }
    let (gl_tp, gl_fp) = gl_path
        .points
        .iter()
        .map(|pt| match (&pt.selection, &pt.error) {
            (Some(sel), None) => {
                let (tp, fp) = tp_fp(sel.selected.iter().copied(), &active);
                (Some(tp), Some(fp))
            }
            _ => (None, None),
        })
        .unzip();

    let mut active_sorted: Vec<usize> = active.into_iter().collect();
    active_sorted.sort_unstable();
    let report = DemoReport {
        s0,
        mode: mode.name().to_string(),
        seed: opts.seed,
        n_total,
        p: ds.p(),
        n_sub: opts.n_sub,
        rows,
        active: active_sorted.iter().map(|&j| ds.names[j].clone()).collect(),
        theta0: theta0.iter().copied().collect(),
        lambdas: opts.lambda_grid.clone(),
        lasso_tp,
        lasso_fp,
        gl_tp,
        gl_fp,
        reference: PublishedReference::default(),
    };
    Ok(DemoOutput {
        report,
        lasso_path,
        gl_path,
    })
}
