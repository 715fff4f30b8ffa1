//! The `kernmetric` command-line front end.
//!
//! Exit codes: 0 success, 1 selfcheck failure, 2 usage or parse error,
//! 3 semantic or data error.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

use crate::config::{default_kernel, load_kernel, BuildContext, Command, ConfigError, RunConfig, ScenarioSource};
use crate::embeddings::gram;
use crate::io::{self, read_grid, read_measure, read_points, read_table, IoError};
use crate::kernels::KernelSpec;
use crate::sampling::power_curve;
use crate::selfcheck;
use crate::spaces::{DiscreteMeasure, Point, PointSpace};
use crate::stats::{divergence, kernel_score, mmd, mmd_u_statistic, mmd_v_statistic, permutation_test_with, Estimator, TestResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFCHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0} invariant(s) failed")]
    Selfcheck(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Selfcheck(_) => EXIT_SELFCHECK,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Data { .. } => CliError::Data(e.to_string()),
            IoError::Io { .. } | IoError::Parse { .. } => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::File(io) => io.into(),
            ConfigError::Kernel(k) => CliError::Data(k.to_string()),
            ConfigError::Parse { .. } | ConfigError::Invalid(_) => CliError::Usage(e.to_string()),
        }
    }
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Kernels, MMDs, kernel scores and two-sample tests on vectors, functions
/// and measures.
#[derive(Debug, Parser)]
#[command(name = "kernmetric", version)]
pub struct Cli {
    /// Command to run; may instead come from --config.
    #[arg(value_enum)]
    pub command: Option<Command>,
    /// Kernel spec JSON (default: Gaussian exp(-|x-y|²/2) on the data's space).
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Points for `gram`.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// First sample for `mmd` and `test2`.
    #[arg(long)]
    pub x: Option<PathBuf>,
    /// Second sample for `mmd` and `test2`.
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// Forecast measure for `score`.
    #[arg(long)]
    pub forecast: Option<PathBuf>,
    /// Weights of the forecast atoms, one per line.
    #[arg(long)]
    pub forecast_weights: Option<PathBuf>,
    /// Observations for `score`.
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// Quadrature grid CSV (`node,weight`) for function data.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Power scenario JSON.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Number of permutations (default 999).
    #[arg(long, allow_negative_numbers = true)]
    pub perms: Option<i64>,
    /// Significance level (default 0.05).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Random seed (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo trials per shift for `power`.
    #[arg(long, allow_negative_numbers = true)]
    pub trials: Option<i64>,
    /// Test statistic: u_statistic (default) or v_statistic.
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: Option<Estimator>,
    /// Output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file setting any of the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

fn parse_estimator(s: &str) -> Result<Estimator, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown estimator '{s}'"))
}

impl Cli {
    fn run_config(&self) -> RunConfig {
        RunConfig {
            command: self.command,
            kernel: self.kernel.clone(),
            points: self.points.clone(),
            x: self.x.clone(),
            y: self.y.clone(),
            forecast: self.forecast.clone(),
            forecast_weights: self.forecast_weights.clone(),
            obs: self.obs.clone(),
            grid: self.grid.clone(),
            scenario: self.scenario.clone().map(ScenarioSource::Path),
            out: self.out.clone(),
            perms: self.perms,
            alpha: self.alpha,
            seed: self.seed,
            trials: self.trials,
            estimator: self.estimator,
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("kernmetric: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?.merged(cli.run_config()),
        None => cli.run_config(),
    };
    let command = cfg.command.ok_or_else(|| CliError::Usage("no command given".into()))?;
    match command {
        Command::Gram => run_gram(&cfg),
        Command::Mmd => run_mmd(&cfg),
        Command::Test2 => run_test2(&cfg),
        Command::Score => run_score(&cfg),
        Command::Power => run_power(&cfg),
        Command::Selfcheck => run_selfcheck(&cfg, cli.inject_fault),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

/// Resolves the kernel: the kernel file if given, otherwise the default
/// Gaussian kernel on `L²` over the grid or on `ℝ^d` with `d` taken from
/// the width of `probe`.
fn resolve_kernel(cfg: &RunConfig, probe: &Path) -> CliResult<KernelSpec> {
    let grid = cfg.grid.as_deref().map(read_grid).transpose()?.map(Arc::new);
    match &cfg.kernel {
        Some(path) => Ok(load_kernel(path, &BuildContext { grid, ..Default::default() })?),
        None => {
            let space = match grid {
                Some(grid) => PointSpace::FuncLp { grid, p: 2.0 },
                None => {
                    let dim = read_table(probe)?
                        .width()
                        .ok_or_else(|| CliError::Data(format!("{}: no data rows", probe.display())))?;
                    PointSpace::Euclidean { dim }
                }
            };
            Ok(default_kernel(space)?)
        }
    }
}

fn read_sample(path: &Path, k: &KernelSpec, min_rows: usize) -> CliResult<Vec<Point>> {
    let pts = read_points(path, k.space())?;
    if pts.len() < min_rows {
        return Err(CliError::Data(format!("{}: need at least {min_rows} rows, found {}", path.display(), pts.len())));
    }
    Ok(pts)
}

pub fn run_gram(cfg: &RunConfig) -> CliResult<()> {
    let points_path = require(&cfg.points, "points")?;
    let out = require(&cfg.out, "out")?;
    let k = resolve_kernel(cfg, points_path)?;
    let pts = read_sample(points_path, &k, 1)?;
    let g = gram(&k, &pts)?;
    io::write_matrix(out, g.entries())?;
    println!("wrote {m}x{m} {} Gram matrix to {}", k.kind(), out.display(), m = pts.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct MmdReport {
    kernel: &'static str,
    n_x: usize,
    n_y: usize,
    mmd: f64,
    mmd_squared: f64,
    divergence: f64,
    u_statistic: f64,
    v_statistic: f64,
}

pub fn run_mmd(cfg: &RunConfig) -> CliResult<()> {
    let x_path = require(&cfg.x, "x")?;
    let y_path = require(&cfg.y, "y")?;
    let out = require(&cfg.out, "out")?;
    let k = resolve_kernel(cfg, x_path)?;
    let xs = read_sample(x_path, &k, 2)?;
    let ys = read_sample(y_path, &k, 2)?;
    let p = DiscreteMeasure::empirical(k.space().clone(), xs.clone())?;
    let q = DiscreteMeasure::empirical(k.space().clone(), ys.clone())?;
    let gamma = mmd(&k, &p, &q)?;
    let report = MmdReport {
        kernel: k.kind(),
        n_x: xs.len(),
        n_y: ys.len(),
        mmd: gamma,
        mmd_squared: gamma * gamma,
        divergence: divergence(&k, &p, &q)?,
        u_statistic: mmd_u_statistic(&k, &xs, &ys)?,
        v_statistic: mmd_v_statistic(&k, &xs, &ys)?,
    };
    io::write_json(out, &report)?;
    println!("mmd = {}", io::fmt_f64(gamma));
    Ok(())
}

#[derive(Debug, Serialize)]
struct TestReport {
    #[serde(flatten)]
    result: TestResult,
    alpha: f64,
    reject: bool,
}

pub fn run_test2(cfg: &RunConfig) -> CliResult<()> {
    let n_perm = cfg.n_perm()?;
    let alpha = cfg.alpha()?;
    let x_path = require(&cfg.x, "x")?;
    let y_path = require(&cfg.y, "y")?;
    let out = require(&cfg.out, "out")?;
    let k = resolve_kernel(cfg, x_path)?;
    let xs = read_sample(x_path, &k, 2)?;
    let ys = read_sample(y_path, &k, 2)?;
    let estimator = cfg.estimator.unwrap_or(Estimator::UStatistic);
    let result = permutation_test_with(&k, &xs, &ys, n_perm, cfg.seed(), estimator)?;
    let reject = result.rejects(alpha);
    println!(
        "statistic = {}  p = {}  {}",
        io::fmt_f64(result.statistic),
        result.p_value,
        if reject { "REJECT" } else { "FAIL-TO-REJECT" }
    );
    io::write_json(out, &TestReport { result, alpha, reject })?;
    Ok(())
}

pub fn run_score(cfg: &RunConfig) -> CliResult<()> {
    let f_path = require(&cfg.forecast, "forecast")?;
    let obs_path = require(&cfg.obs, "obs")?;
    let out = require(&cfg.out, "out")?;
    let k = resolve_kernel(cfg, obs_path)?;
    let forecast = read_measure(f_path, k.space(), cfg.forecast_weights.as_deref())?;
    if !forecast.is_probability() {
        return Err(CliError::Data(format!(
            "{}: the forecast must have nonnegative weights summing to 1 (total mass {})",
            f_path.display(),
            forecast.total_mass()
        )));
    }
    let obs = read_sample(obs_path, &k, 1)?;
    let scores = obs.iter().map(|x| kernel_score(&k, &forecast, x)).collect::<crate::Result<Vec<f64>>>()?;
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    io::write_scores(out, &scores, mean)?;
    println!("mean score = {}", io::fmt_f64(mean));
    Ok(())
}

pub fn run_power(cfg: &RunConfig) -> CliResult<()> {
    let trials = cfg.trials()?;
    let n_perm = cfg.n_perm()?;
    let alpha = cfg.alpha()?;
    let out = require(&cfg.out, "out")?;
    let scenario = cfg.scenario()?;
    let space = scenario.space();
    let k = match &cfg.kernel {
        Some(path) => {
            let grid = match &space {
                PointSpace::FuncLp { grid, .. } => Some(grid.clone()),
                _ => None,
            };
            load_kernel(path, &BuildContext { grid, default_space: Some(space), ..Default::default() })?
        }
        None => default_kernel(space)?,
    };
    let rows = power_curve(&k, &scenario, trials, n_perm, alpha, cfg.seed())?;
    io::write_power(out, &rows)?;
    for r in &rows {
        println!("shift {}  rejection rate {} ± {}", r.shift, r.rejection_rate, r.mc_stderr);
    }
    Ok(())
}

pub fn run_selfcheck(cfg: &RunConfig, inject_fault: bool) -> CliResult<()> {
    let mut buf = Vec::new();
    let outcomes = selfcheck::run(selfcheck::Options { inject_fault }, &mut buf)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    print!("{}", String::from_utf8_lossy(&buf));
    if let Some(out) = &cfg.out {
        io::write_atomic(out, &buf)?;
    }
    match outcomes.iter().filter(|o| o.error.is_some()).count() {
        0 => Ok(()),
        n => Err(CliError::Selfcheck(n)),
    }
}
