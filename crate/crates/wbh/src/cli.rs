//! The `wbh` command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use wbh_core::procedure::{t_squared_from_z, CalibratedMethod, MethodKind, TestResult};
use wbh_core::varselect::{select, t_squared, RegressionProblem};
use wbh_core::build_model;

use crate::error::{AppError, Result};
use crate::io::{read_matrix, read_vector, ScenarioFile};
use crate::report::{footer, real, real_opt, real_vec, simulation_json, simulation_tsv, to_json, SCHEMA_VERSION};
use crate::sim::{simulate, SimulationReport};

#[derive(Debug, Parser)]
#[command(name = "wbh", version, about = "Weighted Benjamini-Hochberg tests for correlated normal means")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print weights, base constant and critical constants for a covariance.
    Calibrate(CalibrateArgs),
    /// Test every mean of one observation vector.
    Test(TestArgs),
    /// Select regression coefficients.
    Select(SelectArgs),
    /// Run Monte Carlo scenarios.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Z,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Tsv,
}

#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Covariance matrix, CSV.
    #[arg(long)]
    pub sigma: PathBuf,
    /// FDR level.
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Degrees of freedom of the scale estimate (t mode).
    #[arg(long)]
    pub m: Option<f64>,
}

impl MethodArgs {
    fn kind(&self) -> Result<MethodKind> {
        match (self.mode, self.m) {
            (Mode::Z, _) => Ok(MethodKind::Z),
            (Mode::T, Some(m)) => Ok(MethodKind::T { dof: m }),
            (Mode::T, None) => Err(AppError::Invalid("--mode t needs --m".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub method: MethodArgs,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub method: MethodArgs,
    /// Observation vector `x ~ N(μ, Σ)` (or `N(μ, τ²Σ)` in t mode), CSV.
    #[arg(long)]
    pub stats: PathBuf,
    /// Scale statistic `V ~ τ² χ²_m` (t mode).
    #[arg(long)]
    pub v: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Design matrix, CSV, one row per observation.
    #[arg(long)]
    pub design: PathBuf,
    /// Response vector, CSV.
    #[arg(long)]
    pub response: PathBuf,
    #[arg(long)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file, JSON.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub reps: u64,
    #[arg(long)]
    pub seed: u64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Serialize)]
struct CalibrationOutput<'a> {
    schema_version: u32,
    command: &'static str,
    method: String,
    #[serde(serialize_with = "real")]
    alpha: f64,
    #[serde(serialize_with = "real")]
    alpha1: f64,
    #[serde(serialize_with = "real")]
    residual: f64,
    #[serde(serialize_with = "real_vec")]
    weights: &'a [f64],
    #[serde(serialize_with = "real_vec")]
    critical_constants: &'a [f64],
}

#[derive(Serialize)]
struct TestOutput<'a> {
    schema_version: u32,
    command: &'static str,
    method: String,
    #[serde(serialize_with = "real")]
    alpha1: f64,
    rejected: &'a [usize],
    #[serde(serialize_with = "real_opt")]
    threshold: &'a Option<f64>,
    #[serde(serialize_with = "real_vec")]
    raw_pvalues: &'a [f64],
    #[serde(serialize_with = "real_vec")]
    transformed_pvalues: &'a [f64],
    #[serde(serialize_with = "real_vec")]
    weights: &'a [f64],
}

#[derive(Serialize)]
struct SelectOutput<'a> {
    schema_version: u32,
    command: &'static str,
    selected: &'a [usize],
    observations: usize,
    dof: usize,
    #[serde(serialize_with = "real")]
    tau2_hat: f64,
    #[serde(serialize_with = "real_vec")]
    coefficients: &'a [f64],
    #[serde(serialize_with = "real_vec")]
    t_squared: &'a [f64],
    #[serde(serialize_with = "real_vec")]
    weights: &'a [f64],
    #[serde(serialize_with = "real")]
    alpha1: f64,
    #[serde(serialize_with = "real_opt")]
    threshold: &'a Option<f64>,
    #[serde(serialize_with = "real_vec")]
    transformed_pvalues: &'a [f64],
}

fn method_name(kind: MethodKind) -> String {
    match kind {
        MethodKind::Z => "z".into(),
        MethodKind::T { dof } => format!("t(m={dof})"),
    }
}

fn calibrate_method(args: &MethodArgs) -> Result<(CalibratedMethod, wbh_core::CorrelationModel)> {
    let model = build_model(&read_matrix(&args.sigma)?)?;
    let method = CalibratedMethod::for_model(&model, args.alpha, args.kind()?)?;
    Ok((method, model))
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<String> {
    let (method, _) = calibrate_method(&args.method)?;
    Ok(to_json(&CalibrationOutput {
        schema_version: SCHEMA_VERSION,
        command: "calibrate",
        method: method_name(method.kind()),
        alpha: method.alpha(),
        alpha1: method.alpha1(),
        residual: method.residual(),
        weights: method.weights(),
        critical_constants: &method.critical_constants(),
    }))
}

pub fn cmd_test(args: &TestArgs) -> Result<String> {
    let (method, model) = calibrate_method(&args.method)?;
    let x = read_vector(&args.stats)?;
    let z = model.standardize(&x)?;
    let squared = match method.kind() {
        MethodKind::Z => z.iter().map(|z| z * z).collect(),
        MethodKind::T { dof } => {
            let v = args.v.ok_or_else(|| AppError::Invalid("--mode t needs --v".into()))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(AppError::Invalid(format!("--v {v} must be positive")));
            }
            t_squared_from_z(&z, v, dof)
        }
    };
    let TestResult {
        raw_pvalues,
        transformed_pvalues,
        outcome,
    } = method.test(&squared)?;
    Ok(to_json(&TestOutput {
        schema_version: SCHEMA_VERSION,
        command: "test",
        method: method_name(method.kind()),
        alpha1: method.alpha1(),
        rejected: &outcome.rejected,
        threshold: &outcome.threshold,
        raw_pvalues: &raw_pvalues,
        transformed_pvalues: &transformed_pvalues,
        weights: method.weights(),
    }))
}

pub fn cmd_select(args: &SelectArgs) -> Result<String> {
    let design = read_matrix(&args.design)?;
    let response = read_vector(&args.response)?;
    let problem = RegressionProblem::new(design, response)?;
    let sel = select(&problem, args.alpha)?;
    let t2 = t_squared(&sel.fit)?;
    Ok(to_json(&SelectOutput {
        schema_version: SCHEMA_VERSION,
        command: "select",
        selected: sel.selected(),
        observations: problem.observations(),
        dof: sel.fit.dof,
        tau2_hat: sel.fit.tau2_hat,
        coefficients: &sel.fit.beta_hat,
        t_squared: &t2,
        weights: sel.method.weights(),
        alpha1: sel.method.alpha1(),
        threshold: &sel.result.outcome.threshold,
        transformed_pvalues: &sel.result.transformed_pvalues,
    }))
}

/// Runs every scenario in the file; returns the reports in file order.
pub fn run_scenarios(args: &SimulateArgs) -> Result<Vec<SimulationReport>> {
    let scenarios = ScenarioFile::read(&args.scenario)?.resolve(args.reps, args.seed)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    scenarios.iter().map(|sc| simulate(sc, workers)).collect()
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(String, Vec<SimulationReport>)> {
    if args.reps == 0 {
        return Err(AppError::Invalid("--reps must be at least 1".into()));
    }
    let reports = run_scenarios(args)?;
    let text = match args.format {
        Format::Json => simulation_json(&reports),
        Format::Tsv => simulation_tsv(&reports),
    };
    Ok((text, reports))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| AppError::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| AppError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate(a) => emit(&cmd_calibrate(a)?, None),
        Command::Test(a) => emit(&cmd_test(a)?, None),
        Command::Select(a) => emit(&cmd_select(a)?, None),
        Command::Simulate(a) => {
            let (text, reports) = cmd_simulate(a)?;
            emit(&text, a.output.as_deref())?;
            eprintln!("{}", footer(&reports));
            let invalid: Vec<String> = reports
                .iter()
                .filter(|r| !r.valid)
                .map(|r| {
                    format!(
                        "{} {} d={}: {} failed replication(s){}",
                        r.digest.structure,
                        r.digest.method,
                        r.digest.dimension,
                        r.failures,
                        r.first_failure.as_deref().map(|m| format!(", first: {m}")).unwrap_or_default()
                    )
                })
                .collect();
            if invalid.is_empty() {
                Ok(())
            } else {
                Err(AppError::Validation(invalid.join("; ")))
            }
        }
    }
}
