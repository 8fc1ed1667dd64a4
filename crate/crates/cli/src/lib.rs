//! Command-line front end: argument parsing, data ingestion and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub mod commands;
pub mod error;
pub mod io;

pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "owl", version, about = "Optimistically weighted likelihood estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model at a fixed or tuned TV radius.
    Fit(FitArgs),
    /// Trace the minimal OKL over a grid of radii and pick the bend.
    Tune(TuneArgs),
    /// Run a corruption sweep on a synthetic scenario.
    Simulate(SimulateArgs),
    /// Outlier-stratified bootstrap bands for a fit.
    Bootstrap(BootstrapArgs),
    /// Compare a Monte-Carlo coarsened likelihood with the brute-force OKL.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Gaussian,
    Linear,
    Logistic,
    GaussianMixture,
    BernoulliMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovKind {
    Spherical,
    Diagonal,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Indicator,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodKind {
    Owl,
    OwlKnown,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectorKind {
    MaxLikelihood,
    Random,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Response column (regression models).
    #[arg(long)]
    pub response: Option<String>,
    /// Feature columns; defaults to every column except the response.
    #[arg(long, value_delimiter = ',')]
    pub columns: Option<Vec<String>>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Number of mixture components.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Covariance structure of Gaussian mixture components.
    #[arg(long, value_enum, default_value = "spherical")]
    pub covariance: CovKind,
    /// L2 penalty on logistic regression slopes.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[arg(long, value_enum, default_value = "indicator")]
    pub kernel: KernelKind,
    /// Gaussian kernel bandwidth, or `auto` to pick among k-NN distances.
    #[arg(long)]
    pub bandwidth: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Starting points per fit.
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Cap on alternating iterations per fit.
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
#[command(group(ArgGroup::new("radius").required(true).args(["epsilon", "tune"])))]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// TV radius in [0, 1].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Choose the radius by the curvature search first.
    #[arg(long)]
    pub tune: bool,
    /// Radius grid for `--tune` as start:stop:step.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Radius grid as start:stop:step; defaults to 50 log10-spaced values in [1e-4, 1e-1].
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// One of gaussian_mean, linear_regression, logistic_regression,
    /// gaussian_mixture, bernoulli_mixture.
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Components (mixture scenarios).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.2")]
    pub fractions: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "owl-known,mle")]
    pub methods: Vec<MethodKind>,
    #[arg(long, value_enum, default_value = "max-likelihood")]
    pub selector: SelectorKind,
    /// Number of seeds, starting at `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Radius grid searched by the `owl` method, as start:stop:step.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 200)]
    pub replicates: usize,
    #[arg(long, default_value_t = 0.9)]
    pub level: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyArgs {
    /// Number of atoms of the finite sample space (at most 5).
    #[arg(long, default_value_t = 2)]
    pub support: usize,
    /// Sample size of the observed data.
    #[arg(long, default_value_t = 50)]
    pub n: usize,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 200_000)]
    pub reps: u64,
    /// Model probabilities; defaults to 0.7,0.3 on two atoms.
    #[arg(long, value_delimiter = ',')]
    pub p_theta: Option<Vec<f64>>,
    /// Target empirical frequencies of the data; defaults to uniform.
    #[arg(long, value_delimiter = ',')]
    pub p_hat: Option<Vec<f64>>,
    /// Grid step of the brute-force search.
    #[arg(long)]
    pub resolution: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("{e}");
        return e.code();
    }
    let result = match &cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Tune(a) => commands::tune(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bootstrap(a) => commands::bootstrap(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

/// Sizes the worker pool from `OWL_THREADS` when set.
fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("OWL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("OWL_THREADS='{v}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}
