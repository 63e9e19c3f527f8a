//! `gauss-lasso` command-line tool.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use gauss_lasso_core::conditions::{theorem_report, ReOptions, Regime, ReportInputs};
use gauss_lasso_core::data_pipeline::{self, DemoOptions, Dataset, LoadOptions, PruneMode};
use gauss_lasso_core::designs::{confounder_covariance, leading_support_theta, ConfounderDesign};
use gauss_lasso_core::experiments::{recovery_curve, ExperimentConfig, Override, RunManifest};
use gauss_lasso_core::gauss_lasso::{gauss_lasso_path, select};
use gauss_lasso_core::lasso::{self, geometric_grid, LassoSettings};
use gauss_lasso_core::{CovarianceModel, Error};

#[derive(Debug, Parser)]
#[command(name = "gauss-lasso", version, about = "Lasso and Gauss-Lasso model selection with condition diagnostics")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory receiving result files and manifest.json.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    /// Format of tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the Lasso at one regularization level.
    Fit(FitArgs),
    /// Run the Gauss-Lasso selector at one regularization level.
    Select(SelectArgs),
    /// Lasso (and optionally Gauss-Lasso) solution paths over a decreasing grid.
    Path(PathArgs),
    /// Evaluate the recovery conditions for a population covariance and coefficient vector.
    Diagnose(DiagnoseArgs),
    /// Monte Carlo support-recovery experiment from a TOML config.
    Simulate(SimulateArgs),
    /// Impute, prune to full rank, and standardize a CSV.
    Preprocess(PreprocessArgs),
    /// Subsample comparison of Lasso and Gauss-Lasso on the communities-and-crime data.
    DemoCrime(DemoArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    response: String,
    /// Token marking a missing cell.
    #[arg(long, default_value = data_pipeline::DEFAULT_MISSING_TOKEN)]
    missing: String,
    /// Comma-separated columns to ignore while reading.
    #[arg(long, value_delimiter = ',')]
    ignore: Vec<String>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, Error> {
        let opts = LoadOptions {
            missing_token: self.missing.clone(),
            ignore: self.ignore.clone(),
        };
        data_pipeline::load_csv_with(&self.input, &self.response, &opts)
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Regularization level.
    #[arg(long)]
    lambda: f64,
    /// KKT tolerance for convergence.
    #[arg(long, default_value_t = 1e-8)]
    kkt_tol: f64,
    /// Maximum coordinate-descent sweeps.
    #[arg(long, default_value_t = 100_000)]
    max_sweeps: usize,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Regularization level.
    #[arg(long)]
    lambda: f64,
    /// Number of coefficients to keep.
    #[arg(long)]
    s0: usize,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Explicit strictly decreasing grid (overrides the geometric grid).
    #[arg(long, value_delimiter = ',')]
    lambdas: Vec<f64>,
    /// Largest grid value.
    #[arg(long, default_value_t = 1.0)]
    lambda_max: f64,
    /// Smallest grid value.
    #[arg(long, default_value_t = 0.001)]
    lambda_min: f64,
    /// Number of geometric grid points.
    #[arg(long, default_value_t = 50)]
    num: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>, Error> {
        if self.lambdas.is_empty() {
            geometric_grid(self.lambda_max, self.lambda_min, self.num)
        } else {
            lasso::validate_grid(&self.lambdas)?;
            Ok(self.lambdas.clone())
        }
    }
}

#[derive(Debug, Args)]
struct PathArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Also compute the Gauss-Lasso path keeping this many coefficients.
    #[arg(long)]
    s0: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DesignArg {
    Confounder,
    Identity,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Deterministic,
    Random,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    /// Covariance family.
    #[arg(long, value_enum)]
    design: DesignArg,
    /// Number of covariates.
    #[arg(long)]
    p: usize,
    /// Support size (used by the confounder design and the default theta0).
    #[arg(long, default_value_t = 1)]
    s0: usize,
    /// Confounder strength.
    #[arg(long, default_value_t = 0.0)]
    a: f64,
    /// Comma-separated coefficients; defaults to ones on the first s0 coordinates.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta0: Vec<f64>,
    /// Headerless p x p CSV covariance (explicit design).
    #[arg(long)]
    covariance: Option<PathBuf>,
    /// Noise level.
    #[arg(long, default_value_t = 0.1)]
    sigma: f64,
    /// Sample size.
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Probability exponent, must exceed 1.
    #[arg(long, default_value_t = 2.0)]
    c1: f64,
    /// Constant in the eta side condition and the Gauss-Lasso sample-size constant.
    #[arg(long, default_value_t = 0.1)]
    c2: f64,
    /// Design regime.
    #[arg(long, value_enum, default_value_t = RegimeArg::Deterministic)]
    regime: RegimeArg,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Sweep as key=v1,v2,... with key in {a, n, p, s0, sigma, lambda}.
    #[arg(long)]
    sweep: Option<String>,
    /// Override the number of replicates.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Debug, Args)]
struct PruneArgs {
    /// File listing columns to drop, one per line; rank-greedy pruning when absent.
    #[arg(long)]
    drop_list: Option<PathBuf>,
}

impl PruneArgs {
    fn mode(&self) -> Result<PruneMode, Error> {
        match &self.drop_list {
            Some(p) => PruneMode::from_list_file(p),
            None => Ok(PruneMode::RankGreedy),
        }
    }
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prune: PruneArgs,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    prune: PruneArgs,
    #[command(flatten)]
    grid: GridArgs,
    /// Subsample size.
    #[arg(long, default_value_t = 85)]
    n_sub: usize,
    /// Full-data coefficients above this magnitude count as truly active.
    #[arg(long, default_value_t = 0.04)]
    significance_threshold: f64,
    /// Lasso coefficients below this magnitude count as zero.
    #[arg(long, default_value_t = 0.005)]
    zero_threshold: f64,
}

struct Ctx<'a> {
    dir: &'a Path,
    format: Format,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), Error> {
        let f = BufWriter::new(File::create(self.path(name))?);
        serde_json::to_writer_pretty(f, value)?;
        Ok(())
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, Error> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn fit(ctx: &Ctx, args: &FitArgs) -> Result<(), Error> {
    let inst = args.data.load()?.to_instance()?;
    let settings = LassoSettings {
        kkt_tol: args.kkt_tol,
        max_sweeps: args.max_sweeps,
        ..LassoSettings::default()
    };
    let res = lasso::solve_lasso(&inst, args.lambda, &settings)?;
    let kkt = lasso::verify_kkt(&inst, args.lambda, &res.coef, settings.kkt_tol)?;
    let support = lasso::signed_support(res.coef.as_slice(), settings.threshold_for(res.coef.as_slice()));
    match ctx.format {
        Format::Json => ctx.write_json(
            "fit.json",
            &json!({
                "lambda": args.lambda,
                "coefficients": res.coef.as_slice(),
                "support": support.support(),
                "signs": support.signs(),
                "sweeps": res.sweeps,
                "kkt_max_violation": kkt.max_violation,
                "objective": lasso::objective(&inst, args.lambda, &res.coef),
            }),
        )?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(ctx.create("fit.csv")?);
            w.write_record(["index", "coefficient"])?;
            for (j, c) in res.coef.iter().enumerate() {
                w.write_record([j.to_string(), c.to_string()])?;
            }
            w.flush()?;
        }
    }
    eprintln!("fit: {} nonzero coefficients, kkt violation {:e}", support.size(), kkt.max_violation);
    Ok(())
}

fn select_cmd(ctx: &Ctx, args: &SelectArgs) -> Result<(), Error> {
    let ds = args.data.load()?;
    let inst = ds.to_instance()?;
    let sel = select(&inst, args.lambda, args.s0, &LassoSettings::default())?;
    let names: Vec<&str> = sel.selected.iter().map(|&j| ds.names[j].as_str()).collect();
    let out = json!({ "selection": &sel, "selected_names": names });
    match ctx.format {
        Format::Json => ctx.write_json("selection.json", &out)?,
        Format::Csv => {
            let mut w = csv::Writer::from_writer(ctx.create("selection.csv")?);
            w.write_record(["index", "name", "coefficient", "in_lasso_support", "selected"])?;
            for j in 0..inst.p() {
                w.write_record([
                    j.to_string(),
                    ds.names[j].clone(),
                    sel.theta_gl[j].to_string(),
                    u8::from(sel.lasso_support.contains(&j)).to_string(),
                    u8::from(sel.selected.contains(&j)).to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    print_json(&out)
}

fn path_cmd(ctx: &Ctx, args: &PathArgs) -> Result<(), Error> {
    let inst = args.data.load()?.to_instance()?;
    let grid = args.grid.grid()?;
    let settings = LassoSettings::default();
    let lp = lasso::lasso_path(&inst, &grid, &settings)?;
    let gp = args.s0.map(|s0| gauss_lasso_path(&inst, &grid, s0, &settings)).transpose()?;
    match ctx.format {
        Format::Csv => {
            lp.write_csv(ctx.create("lasso_path.csv")?)?;
            if let Some(gp) = &gp {
                gp.write_csv(ctx.create("gauss_lasso_path.csv")?)?;
            }
        }
        Format::Json => {
            let coefs: Vec<&[f64]> = lp.coefficients.iter().map(|c| c.as_slice()).collect();
            ctx.write_json(
                "paths.json",
                &json!({
                    "lambdas": lp.lambdas,
                    "lasso": coefs,
                    "knots": lp.knots(),
                    "gauss_lasso": gp,
                }),
            )?;
        }
    }
    eprintln!("path: {} grid points, {} knots", grid.len(), lp.knots().len());
    Ok(())
}

fn read_matrix(path: &Path, p: usize) -> Result<DMatrix<f64>, Error> {
    let text = fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(r, line)| {
            line.split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        row: r + 1,
                        column: String::new(),
                        message: format!("cannot parse {:?}", c.trim()),
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension(format!("covariance file must hold a {p}x{p} matrix")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

fn diagnose(ctx: &Ctx, args: &DiagnoseArgs, seed: u64) -> Result<(), Error> {
    let cov = match args.design {
        DesignArg::Confounder => confounder_covariance(&ConfounderDesign::new(args.p, args.s0, args.a)?)?,
        DesignArg::Identity => CovarianceModel::identity(args.p),
        DesignArg::Explicit => {
            let path = args
                .covariance
                .as_ref()
                .ok_or_else(|| Error::Argument("--covariance is required for the explicit design".into()))?;
            CovarianceModel::population(read_matrix(path, args.p)?)?
        }
    };
    let theta0 = if args.theta0.is_empty() {
        leading_support_theta(args.p, args.s0, 1.0)
    } else {
        DVector::from_column_slice(&args.theta0)
    };
    let inputs = ReportInputs {
        sigma: args.sigma,
        n: args.n,
        c1: args.c1,
        c2: args.c2,
        regime: match args.regime {
            RegimeArg::Deterministic => Regime::Deterministic,
            RegimeArg::Random => Regime::Random,
        },
    };
    let re = ReOptions {
        seed,
        ..ReOptions::default()
    };
    let report = theorem_report(&cov, &theta0, inputs, &re)?;
    match ctx.format {
        Format::Json => ctx.write_json("report.json", &report)?,
        Format::Csv => fs::write(ctx.path("report.txt"), report.render_table())?,
    }
    eprint!("{}", report.render_table());
    print_json(&report)
}

fn simulate(ctx: &Ctx, args: &SimulateArgs, seed: Option<u64>) -> Result<serde_json::Value, Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
        cfg.validate()?;
    }
    let sweep: Vec<Vec<Override>> = match &args.sweep {
        Some(spec) => Override::parse_list(spec)?.into_iter().map(|o| vec![o]).collect(),
        None => vec![Vec::new()],
    };
    let table = recovery_curve(&cfg, &sweep)?;
    match ctx.format {
        Format::Csv => table.write_csv(ctx.create("recovery.csv")?)?,
        Format::Json => ctx.write_json("recovery.json", &table)?,
    }
    for row in &table.rows {
        eprintln!(
            "{:>12}  lasso(v0) {:.3}  lasso(sign) {:.3}  gauss-lasso {:.3}",
            if row.label.is_empty() { "base" } else { &row.label },
            row.lasso_v0_freq,
            row.lasso_sign_freq,
            row.gl_freq
        );
    }
    for (label, err) in &table.errors {
        eprintln!("{label}: {err}");
    }
    Ok(serde_json::to_value(&cfg)?)
}

fn preprocess(ctx: &Ctx, args: &PreprocessArgs) -> Result<(), Error> {
    let raw = args.data.load()?;
    let mode = args.prune.mode()?;
    let ds = data_pipeline::preprocess(&raw, &mode)?;
    ds.write_csv(ctx.create("preprocessed.csv")?, &args.data.missing)?;
    let dropped: Vec<&String> = raw.names.iter().filter(|n| !ds.names.contains(n)).collect();
    let summary = json!({
        "n": ds.n(),
        "p": ds.p(),
        "mode": mode.name(),
        "dropped": dropped,
    });
    ctx.write_json("preprocess.json", &summary)?;
    eprintln!("preprocess: n = {}, p = {} ({} mode, {} dropped)", ds.n(), ds.p(), mode.name(), dropped.len());
    Ok(())
}

fn demo(ctx: &Ctx, args: &DemoArgs, seed: u64) -> Result<(), Error> {
    let raw = args.data.load()?;
    let mode = args.prune.mode()?;
    let ds = data_pipeline::preprocess(&raw, &mode)?;
    let opts = DemoOptions {
        n_sub: args.n_sub,
        significance_threshold: args.significance_threshold,
        lasso_zero_threshold: args.zero_threshold,
        lambda_grid: args.grid.grid()?,
        seed,
    };
    let out = data_pipeline::crime_demo(&ds, &mode, &opts)?;
    ctx.write_json("demo_report.json", &out.report)?;
    out.lasso_path.write_csv(ctx.create("lasso_path.csv")?)?;
    out.gl_path.write_csv(ctx.create("gauss_lasso_path.csv")?)?;
    let r = &out.report;
    eprintln!("demo: n_total = {}, p = {}, s0 = {} ({} mode)", r.n_total, r.p, r.s0, r.mode);
    Ok(())
}

fn run(cli: &Cli) -> Result<Option<serde_json::Value>, Error> {
    fs::create_dir_all(&cli.output_dir)?;
    let ctx = Ctx {
        dir: &cli.output_dir,
        format: cli.format,
    };
    let seed = cli.seed.unwrap_or(0);
    match &cli.command {
        Command::Fit(a) => fit(&ctx, a)?,
        Command::Select(a) => select_cmd(&ctx, a)?,
        Command::Path(a) => path_cmd(&ctx, a)?,
        Command::Diagnose(a) => diagnose(&ctx, a, seed)?,
        Command::Simulate(a) => return simulate(&ctx, a, cli.seed).map(Some),
        Command::Preprocess(a) => preprocess(&ctx, a)?,
        Command::DemoCrime(a) => demo(&ctx, a, seed)?,
    }
    Ok(None)
}

fn main() -> ExitCode {
    let start = Instant::now();
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let outcome = run(&cli);
    let config = outcome.as_ref().ok().cloned().flatten();
    let mut manifest = RunManifest::new(argv, cli.seed, start.elapsed().as_secs_f64());
    manifest.config = config;
    let path = cli.output_dir.join("manifest.json");
    let written = File::create(&path)
        .map_err(Error::from)
        .and_then(|f| serde_json::to_writer_pretty(BufWriter::new(f), &manifest).map_err(Error::from));
    match (outcome, written) {
        (Err(e), _) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
        (Ok(_), Err(e)) => {
            eprintln!("error: writing {}: {e}", path.display());
            ExitCode::from(1)
        }
        (Ok(_), Ok(())) => ExitCode::SUCCESS,
    }
}
